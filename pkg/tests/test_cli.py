import json
import re

import numpy as np
import pytest

from hybridchoice.cli import main
from hybridchoice.dataset import PAPER_CHOICE_MAPPING, PAPER_ENCODING_RULES, load_csv, infer_schema
from hybridchoice.modelspec import INDICATORS, paper_estimates
from hybridchoice.report import read_machine_text

from conftest import write_rows

SURVEY_COLUMNS = ["age", "gender", "marital", "education", "income", "household_size", "cars",
                  "trip_purpose", "night_mode", "in_vehicle"]


def _survey_ops(tmp_path, n_survey=263, n_ops=430, shared=72, seed=0, same=False):
    """Survey and operational files sharing ``shared`` e-mail keys."""
    rng = np.random.default_rng(seed)
    cats = {r.source: list(r.categories) for r in PAPER_ENCODING_RULES}
    survey_keys = [f"user{i}@example.org" for i in range(n_survey)]
    ops_keys = survey_keys[:shared] + [f"rider{i}@example.org" for i in range(n_ops - shared)]
    if same:
        ops_keys = survey_keys
    header = ["email", *SURVEY_COLUMNS, "prefer_frt", *INDICATORS]
    rows = []
    for key in survey_keys:
        row = [key] + [cats[c][rng.integers(len(cats[c]))] for c in SURVEY_COLUMNS]
        row.append(list(PAPER_CHOICE_MAPPING)[rng.integers(5)])
        row += [int(v) for v in rng.integers(1, 6, len(INDICATORS))]
        rows.append(row)
    survey = write_rows(tmp_path / "survey.csv", header, rows)
    ops_rows = [[k, int(rng.integers(0, 60)), int(rng.integers(0, 80)), round(float(rng.gamma(4, 5)), 1)]
                for k in ops_keys]
    ops = write_rows(tmp_path / "operations.csv", ["email", "assigned_trips", "unassigned_trips", "waiting_time"],
                     ops_rows)
    return survey, ops


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


# --------------------------------------------------------------------------
# prepare
# --------------------------------------------------------------------------

def test_prepare_fuses_and_validates(tmp_path, capsys):
    survey, ops = _survey_ops(tmp_path)
    out = tmp_path / "fused.csv"
    code, stdout, _ = _run(capsys, "prepare", survey, ops, out, "--validate")
    assert code == 0
    schema = infer_schema(out)
    data = load_csv(out, schema)
    assert len(data) == 72
    for col in ("Assigned_L", "Waiting_H", "Male", "LowIncome", "Hhld_H"):
        assert schema[col] == "binary"
    report = (tmp_path / "fused.csv.validation.txt").read_text()
    t_rows = [line for line in report.splitlines() if line.split()[1:2] == ["Full"]]
    assert [r.split()[0] for r in t_rows] == ["assigned_trips", "unassigned_trips", "waiting_time"]
    manifest = json.loads((tmp_path / "fused.csv.manifest.json").read_text())
    assert manifest["command"] == "prepare"
    assert set(manifest["outputs"]) == {str(out), str(tmp_path / "fused.csv.validation.txt"),
                                        str(tmp_path / "fused.csv.manifest.json")}
    assert all(len(h) == 64 for h in manifest["inputs"].values())
    # raw e-mail addresses never reach the output
    assert "@" not in out.read_text()


def test_prepare_self_comparison_is_zero(tmp_path, capsys):
    survey, ops = _survey_ops(tmp_path, n_survey=120, n_ops=120, shared=120, same=True)
    code, _, _ = _run(capsys, "prepare", survey, ops, tmp_path / "f.csv", "--validate")
    assert code == 0
    report = (tmp_path / "f.csv.validation.txt").read_text()
    ts = [float(line.split()[5]) for line in report.splitlines() if line.split()[1:2] == ["Full"]]
    assert ts == [0.0, 0.0, 0.0]
    chi_part = report.split("Self-reported")[1]
    chis = re.findall(r"^\S+\s+.*?\s+(\d+\.\d{3})\s+(\d\.\d{3})$", chi_part, flags=re.M)
    assert len(chis) == 4
    assert all(float(c) == 0.0 for c, _ in chis)


def test_prepare_missing_key_column(tmp_path, capsys):
    survey = write_rows(tmp_path / "s.csv", ["mail", "age"], [["a@b", "Young"]])
    ops = write_rows(tmp_path / "o.csv", ["email", "waiting_time"], [["a@b", 3]])
    code, _, err = _run(capsys, "prepare", survey, ops, tmp_path / "x.csv")
    assert code == 2
    assert "email" in err


def test_prepare_no_shared_keys(tmp_path, capsys):
    survey, ops = _survey_ops(tmp_path, n_survey=30, n_ops=30, shared=0)
    code, _, err = _run(capsys, "prepare", survey, ops, tmp_path / "x.csv")
    assert code == 2 and "share no keys" in err


# --------------------------------------------------------------------------
# factors
# --------------------------------------------------------------------------

def _two_factor_file(tmp_path, n=3000, seed=1):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((n, 2))
    load = np.array([[0.8, 0], [0.75, 0], [0.7, 0], [0.65, 0], [0, 0.8], [0, 0.75], [0, 0.7]])
    x = f @ load.T + rng.standard_normal((n, 7)) * 0.5
    rows = [[f"r{i}"] + [round(float(v), 4) for v in x[i]] for i in range(n)]
    return write_rows(tmp_path / "ind.csv", ["id", *INDICATORS], rows)


def test_factors_two_factor_grouping(tmp_path, capsys):
    path = _two_factor_file(tmp_path)
    code, stdout, _ = _run(capsys, "factors", path, "--out", tmp_path / "fa")
    assert code == 0
    sections = {}
    current = None
    for line in (tmp_path / "fa.tsv").read_text().splitlines():
        if line.startswith("["):
            current = sections.setdefault(line.strip("[]"), [])
        elif line and current is not None:
            current.append(line.split("\t"))
    assert sections["metadata"][0] == ["n_factors", "2"]
    loadings = np.array([[float(v) for v in row[1:]] for row in sections["loadings"]])
    assert loadings.shape == (7, 2)
    dominant = np.argmax(np.abs(loadings), axis=1)
    assert len(set(dominant[:4])) == 1 and len(set(dominant[4:])) == 1 and dominant[0] != dominant[4]
    for name in INDICATORS:
        assert name in stdout


def test_factors_single_column(tmp_path, capsys):
    path = _two_factor_file(tmp_path, n=200)
    code, stdout, _ = _run(capsys, "factors", path, "--indicators", INDICATORS[0])
    assert code == 0
    assert INDICATORS[0] in stdout


def test_factors_without_indicators(tmp_path, capsys):
    path = write_rows(tmp_path / "none.csv", ["id", "x"], [["a", 1], ["b", 2]])
    code, _, err = _run(capsys, "factors", path)
    assert code == 2 and err


# --------------------------------------------------------------------------
# simulate and estimate
# --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def mnl_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("mnl") / "mnl.csv"
    assert main(["simulate", "preset:MNL", "paper", str(path), "--n", "5000", "--seed", "1"]) == 0
    return path


def test_simulate_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert _run(capsys, "simulate", "preset:ICLV", "paper", path, "--n", "200", "--seed", "4")[0] == 0
    assert a.read_bytes() == b.read_bytes()
    code, stdout, _ = _run(capsys, "simulate", "preset:ICLV", "paper", a, "--n", "50", "--seed", "4")
    assert "clamped" in stdout


@pytest.mark.parametrize("n", ["0", "-3"])
def test_simulate_rejects_empty_population(tmp_path, capsys, n):
    code, _, err = _run(capsys, "simulate", "preset:MNL", "paper", tmp_path / "x.csv", "--n", n, "--seed", "1")
    assert code == 2 and err


def test_simulate_from_truth_file(tmp_path, capsys, mnl_file):
    truth = tmp_path / "truth.tsv"
    truth.write_text("".join(f"{k}\t{v!r}\n" for k, v in paper_estimates("MNL").as_dict().items()))
    out = tmp_path / "t.csv"
    assert _run(capsys, "simulate", "preset:MNL", truth, out, "--n", "5000", "--seed", "1")[0] == 0
    assert out.read_bytes() == mnl_file.read_bytes()
    truth.write_text("ASC_ODT\t1.0\n")
    code, _, err = _run(capsys, "simulate", "preset:MNL", truth, out, "--n", "10", "--seed", "1")
    assert code == 2 and "B_HHLD" in err


def test_estimate_mnl_report_and_recovery(tmp_path, capsys, mnl_file):
    code, stdout, _ = _run(capsys, "estimate", "preset:MNL", mnl_file, "--seed", "1", "--out", tmp_path / "r")
    assert code == 0
    lines = stdout.splitlines()
    head = lines.index(next(l for l in lines if l.startswith("Parameter")))
    rows = []
    for line in lines[head + 2:]:
        if line.startswith("-"):
            break
        rows.append(line)
    assert len(rows) == 11
    perf = [l.split("  ")[0] for l in lines if l.startswith(("Initial", "Final", "Rho"))]
    assert perf == ["Initial log-likelihood", "Final log-likelihood", "Rho-square-bar"]
    assert lines[-2].startswith("* Not statistically significant at 95% confidence level")
    assert lines[-1].startswith("** Not statistically significant at 90% confidence level")

    machine = read_machine_text((tmp_path / "r.tsv").read_text())
    truth = paper_estimates("MNL")
    for name, se in machine["robust_se"].items():
        assert abs(float(machine["estimates"][name]) - truth.value(name)) <= 3 * float(se)
    # human table values are the machine values rounded for display
    from hybridchoice.report import sig3
    for row in rows:
        name, est = row.split()[:2]
        assert est == sig3(float(machine["estimates"][name]))
    manifest = json.loads((tmp_path / "r.manifest.json").read_text())
    assert manifest["seed"] == 1 and manifest["n_draws"] == 1000 and manifest["status"] == "ok"
    assert {str(tmp_path / f"r.{ext}") for ext in ("txt", "tsv", "manifest.json")} == set(manifest["outputs"])


@pytest.mark.slow
def test_estimate_iclv_byte_identical(tmp_path, capsys):
    data = tmp_path / "iclv.csv"
    assert _run(capsys, "simulate", "preset:ICLV", "paper", data, "--n", "150", "--seed", "3")[0] == 0
    outputs = []
    for run, workers in enumerate(("1", "1", "2")):
        prefix = tmp_path / f"run{run}"
        code, _, _ = _run(capsys, "estimate", "preset:ICLV", data, "--draws", "1000", "--seed", "7",
                          "--out", prefix, "--workers", workers)
        assert code in (0, 3)
        outputs.append((tmp_path / f"run{run}.tsv").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_estimate_non_convergence_exit_code(tmp_path, capsys, monkeypatch, mnl_file):
    import hybridchoice.estimator as est

    monkeypatch.setitem(est.warm_start_pipeline.__kwdefaults__, "max_iter", 2)
    code, stdout, err = _run(capsys, "estimate", "preset:MNL", mnl_file, "--seed", "1", "--out", tmp_path / "c")
    assert code == 3
    assert "WARNING: estimation did not converge" in stdout
    assert "did not converge" in err
    assert json.loads((tmp_path / "c.manifest.json").read_text())["status"] == "not-converged"
    assert (tmp_path / "c.tsv").exists()


def test_estimate_invalid_spec(tmp_path, capsys, mnl_file):
    code, _, err = _run(capsys, "estimate", "preset:ICLV", mnl_file, "--seed", "1")
    assert code == 2
    assert "does not validate" in err


def test_estimate_requires_seed(capsys, mnl_file):
    with pytest.raises(SystemExit) as exc:
        main(["estimate", "preset:MNL", str(mnl_file)])
    assert exc.value.code == 2
