import csv

import numpy as np
import pytest

from hybridchoice.dataset import Dataset, Observation


def write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def share_dataset(counts=(40, 23, 9), covariates=None):
    """Dataset whose choices follow ``counts`` in alternative order."""
    obs = []
    i = 0
    for alt, c in zip((1, 2, 3), counts):
        for _ in range(c):
            cov = dict(covariates(i)) if covariates else {}
            obs.append(Observation(f"o{i:04d}", alt, cov))
            i += 1
    variables = {k: "binary" for k in (obs[0].covariates if obs else {})}
    return Dataset(tuple(obs), variables)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict; lines are printed at the end of the run."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, passed, detail=""):
        line = f"CRITERION {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        print(line)
        lines.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
