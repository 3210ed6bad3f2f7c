"""Command-line front end: ``prepare``, ``factors``, ``estimate``, ``simulate``.

Exit codes: 0 success, 2 input or specification error, 3 estimation did not
converge (reports are still written and flagged).
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from collections import Counter
from pathlib import Path

from . import __version__
from .binning import bin_by_clusters, elbow_select, kmeans_1d
from .dataset import (
    Dataset, Observation, encode_choice, encode_dummies, fuse, infer_schema, load_csv, write_csv,
)
from .errors import ArityError, HybridChoiceError, SchemaError
from .estimator import warm_start_pipeline
from .factors import correlation_matrix, extract_factors, factor_table
from .modelspec import FAMILIES, INDICATOR_KINDS, INDICATORS, ParameterVector, paper_estimates, paper_presets, validate
from .report import RunManifest, human_table, machine_text, read_machine_text
from .specfile import load_rules, load_spec
from .stats import chi_square_gof, welch_t_samples
from .synth import GeneratorConfig, generate_with_report

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 2, 3

# Simpler families estimated first to seed each requested family.
_PREDECESSORS = {"MNL": (), "LC": ("MNL",), "ICLV": ("MNL",), "LC_ICLV": ("MNL", "LC", "ICLV")}


class _Fail(Exception):
    """Input problem reported to the user with exit code 2."""


def _manifest_path(prefix: str | Path) -> Path:
    return Path(f"{prefix}.manifest.json")


def _write_manifest(manifest: RunManifest, path: Path, started: float) -> None:
    manifest.wall_time = round(time.perf_counter() - started, 3)
    manifest.outputs.append(str(path))
    path.write_text(manifest.to_json(), encoding="utf-8")


# --------------------------------------------------------------------------
# prepare
# --------------------------------------------------------------------------

def _validation_report(survey: Dataset, operations: Dataset, fused: Dataset, bin_columns, checks) -> str:
    lines = ["Operational attributes: fused (reduced) sample vs operational records (full sample)",
             f"{'Attribute':<20}{'Sample':<10}{'Average':>10}{'Std. dev.':>11}{'Size':>7}{'t-test':>9}{'p':>8}"]
    for col in bin_columns:
        full, reduced = operations.column(col), fused.column(col)
        res = welch_t_samples(full, reduced)
        lines.append(f"{col:<20}{'Full':<10}{full.mean():>10.2f}{full.std(ddof=1):>11.2f}{len(full):>7}"
                     f"{abs(res.t):>9.3f}{res.p_two_sided:>8.3f}")
        lines.append(f"{'':<20}{'Reduced':<10}{reduced.mean():>10.2f}{reduced.std(ddof=1):>11.2f}{len(reduced):>7}")
    lines += ["", "Self-reported attributes: fused (reduced) sample vs survey (full sample)",
              f"{'Attribute':<20}{'Category':<24}{'Observed':>10}{'Expected':>10}{'Chi-square':>12}{'p':>8}"]
    for col in checks:
        if col not in survey.variables:
            raise _Fail(f"validation column {col!r} missing from survey")
        full = Counter(str(v) for v in survey.column(col))
        reduced = Counter(str(v) for v in fused.column(col))
        cats = list(dict.fromkeys([*full, *reduced]))
        observed = [reduced[c] for c in cats]
        expected = [full[c] / len(survey) * len(fused) for c in cats]
        res = chi_square_gof(observed, expected)
        for i, c in enumerate(cats):
            tail = f"{res.statistic:>12.3f}{res.p:>8.3f}" if i == 0 else ""
            lines.append(f"{col if i == 0 else '':<20}{c:<24}{observed[i]:>10}{expected[i]:>10.1f}{tail}")
    return "\n".join(lines) + "\n"


def cmd_prepare(args) -> int:
    started = time.perf_counter()
    rules = load_rules(args.rules)
    survey_schema = infer_schema(args.survey, rules.indicators, reserved=(rules.key,))
    ops_schema = infer_schema(args.operations, reserved=(rules.key,))
    survey = load_csv(args.survey, survey_schema, key_column=rules.key, choice_column=None)
    operations = load_csv(args.operations, ops_schema, key_column=rules.key, choice_column=None)
    fused = fuse(survey, operations)
    if not len(fused):
        raise _Fail("survey and operational records share no keys")

    # Levels are fitted on the full operational sample, then applied to the fused rows.
    variables = dict(fused.variables)
    raw_levels: dict[str, list[str]] = {}
    for rule in rules.binning:
        if rule.column not in operations.variables:
            raise SchemaError(f"binning column {rule.column!r} missing from operational records")
        full = operations.column(rule.column)
        k = rule.k if rule.k is not None else elbow_select(full, rule.k_max, rule.seed).k
        if len(rule.labels) < k:
            raise ArityError(f"{rule.column}: {len(rule.labels)} labels for {k} clusters")
        clusters = kmeans_1d(full, k, rule.seed)
        raw_levels[rule.target] = bin_by_clusters(fused.column(rule.column), clusters, rule.labels[:k])
        variables[rule.target] = "categorical"
    observations = [
        Observation(o.id, o.choice, o.covariates, o.indicators, o.weight,
                    {**o.raw, **{t: levels[i] for t, levels in raw_levels.items()}})
        for i, o in enumerate(fused)
    ]
    fused = fused.with_observations(observations, variables)
    encoded = encode_dummies(encode_choice(fused, rules.choice_source, rules.choice_mapping), rules.encoding)
    keep = {n: k for n, k in encoded.variables.items() if k != "categorical"}
    write_csv(encoded.with_observations(encoded.observations, keep), args.out)
    print(f"wrote {len(encoded)} fused observations to {args.out}")

    manifest = RunManifest.for_inputs("prepare", [args.survey, args.operations]
                                      + ([args.rules] if args.rules != "paper" else []),
                                      seed=None, n_draws=None, version=__version__, outputs=[str(args.out)])
    if args.validate:
        report = _validation_report(survey, operations, fused, [b.column for b in rules.binning],
                                    rules.categorical_checks)
        print(report, end="")
        vpath = Path(f"{args.out}.validation.txt")
        vpath.write_text(report, encoding="utf-8")
        manifest.outputs.append(str(vpath))
    _write_manifest(manifest, _manifest_path(args.out), started)
    return EXIT_OK


# --------------------------------------------------------------------------
# factors
# --------------------------------------------------------------------------

def cmd_factors(args) -> int:
    started = time.perf_counter()
    if args.indicators is not None:
        names = [n.strip() for n in args.indicators.split(",") if n.strip()]
    else:
        with open(args.data, encoding="utf-8") as fh:
            header = [h.strip() for h in fh.readline().split(",")]
        names = [n for n in INDICATORS if n in header]
    if not names:
        raise _Fail("no indicator columns given or found")
    schema = {n: k for n, k in infer_schema(args.data, names).items() if n in names}
    missing = [n for n in names if n not in schema]
    if missing:
        raise _Fail(f"indicator column(s) missing: {', '.join(missing)}")
    data = load_csv(args.data, schema, choice_column=None)
    corr = correlation_matrix(data.indicator_matrix(names), names)
    retain = 1 if len(names) == 1 else (args.retain if args.retain == "kaiser" else int(args.retain))
    solution = extract_factors(corr, retain, indicators=names, method=args.method)
    print(factor_table(solution, INDICATOR_KINDS))
    if args.out:
        out = Path(f"{args.out}.tsv")
        lines = ["[metadata]", f"n_factors\t{solution.n_factors}", f"method\t{solution.method}", "",
                 "[loadings]"]
        lines += [name + "".join(f"\t{float(v)!r}" for v in solution.loadings[i])
                  for i, name in enumerate(solution.indicators)]
        lines += ["", "[eigenvalues]"] + [repr(float(e)) for e in solution.eigenvalues]
        out.write_text("\n".join(lines) + "\n", encoding="utf-8")
        manifest = RunManifest.for_inputs("factors", [args.data], seed=None, n_draws=None,
                                          version=__version__, outputs=[str(out)])
        _write_manifest(manifest, _manifest_path(args.out), started)
    return EXIT_OK


# --------------------------------------------------------------------------
# estimate
# --------------------------------------------------------------------------

def _serious(findings):
    return [f for f in findings if f.kind != "unused-parameter"]


def cmd_estimate(args) -> int:
    started = time.perf_counter()
    spec = load_spec(args.spec)
    n_draws = args.draws if args.draws is not None else spec.draws
    if n_draws < 1:
        raise _Fail("--draws must be positive")
    schema = infer_schema(args.data, spec.indicator_names)
    data = load_csv(args.data, schema, alternatives=spec.alternatives)
    findings = _serious(validate(spec, data))
    if findings:
        raise _Fail("specification does not validate:\n  " + "\n  ".join(str(f) for f in findings))

    presets = {spec.family: spec}
    family_order = []
    for fam in _PREDECESSORS.get(spec.family, ()):
        candidate = paper_presets()[fam]
        if not _serious(validate(candidate, data)):
            presets[fam] = candidate
            family_order.append(fam)
    family_order.append(spec.family)
    pipeline = warm_start_pipeline(data, presets, n_draws=n_draws, seed=args.seed,
                                   families=tuple(f for f in FAMILIES if f in family_order),
                                   workers=args.workers)
    result = pipeline.results[spec.family]
    for line in pipeline.provenance:
        log.info(line)

    human = human_table(result, title=f"Model: {spec.name or spec.family}")
    print(human, end="")
    status = EXIT_OK if result.converged else EXIT_NOT_CONVERGED
    if not result.converged:
        print(f"estimation did not converge: {result.message}", file=sys.stderr)
    if args.out:
        prefix = args.out
        txt, tsv = Path(f"{prefix}.txt"), Path(f"{prefix}.tsv")
        txt.write_text(human, encoding="utf-8")
        machine = machine_text(result, extra={"requested_seed": args.seed, "requested_draws": n_draws})
        machine += "\n[pipeline]\n" + "\n".join(pipeline.provenance) + "\n"
        tsv.write_text(machine, encoding="utf-8")
        inputs = [args.data] + ([] if str(args.spec).startswith("preset:") else [args.spec])
        manifest = RunManifest.for_inputs("estimate", inputs, seed=args.seed, n_draws=n_draws,
                                          version=__version__, outputs=[str(txt), str(tsv)],
                                          status="ok" if result.converged else "not-converged")
        _write_manifest(manifest, _manifest_path(prefix), started)
    return status


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------

def _load_truth(source: str, spec) -> ParameterVector:
    if source == "paper":
        if spec.family not in FAMILIES:
            raise _Fail(f"no reference values for family {spec.family!r}")
        table = paper_estimates(spec.family).as_dict()
    else:
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise _Fail(f"cannot read truth file {source}: {exc}") from None
        sections = read_machine_text(text)
        entries = sections.get("estimates")
        if entries is None:
            # plain ``name<TAB>value`` lines
            entries = dict(line.split("\t", 1) for line in text.splitlines() if "\t" in line)
        try:
            table = {k: float(v) for k, v in entries.items()}
        except ValueError as exc:
            raise _Fail(f"truth file {source}: {exc}") from None
    missing = [n for n in spec.parameters.names if n not in table]
    if missing:
        raise _Fail(f"truth lacks value(s) for {', '.join(missing)}")
    return spec.parameters.with_values({n: table[n] for n in spec.parameters.names})


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    if args.n < 1:
        raise _Fail("--n must be at least 1")
    spec = load_spec(args.spec)
    truth = _load_truth(args.truth, spec)
    report = generate_with_report(GeneratorConfig(args.n, spec, truth, seed=args.seed,
                                                  likert=not args.continuous))
    write_csv(report.dataset, args.out)
    print(f"wrote {len(report.dataset)} synthetic observations to {args.out}")
    if spec.latent_variables and not args.continuous:
        print(f"share of indicator draws clamped to 1..5: {report.clamped_share:.3f}")
    inputs = [] if str(args.spec).startswith("preset:") else [args.spec]
    inputs += [] if args.truth == "paper" else [args.truth]
    manifest = RunManifest.for_inputs("simulate", inputs, seed=args.seed, n_draws=None,
                                      version=__version__, outputs=[str(args.out)])
    _write_manifest(manifest, _manifest_path(args.out), started)
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridchoice", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="fuse survey and operational records into a model-ready CSV")
    p.add_argument("survey")
    p.add_argument("operations")
    p.add_argument("out")
    p.add_argument("--rules", default="paper", help="rules file, or 'paper' for the built-in rules")
    p.add_argument("--validate", action="store_true", help="print representativeness tests")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("factors", help="exploratory factor analysis of indicator columns")
    p.add_argument("data")
    p.add_argument("--indicators", help="comma-separated indicator columns")
    p.add_argument("--retain", default="kaiser", help="factor count or 'kaiser'")
    p.add_argument("--method", default="principal_axis", choices=("principal_axis", "principal_components"))
    p.add_argument("--out", help="write PREFIX.tsv and PREFIX.manifest.json")
    p.set_defaults(func=cmd_factors)

    p = sub.add_parser("estimate", help="estimate a model from a spec file or preset:FAMILY")
    p.add_argument("spec")
    p.add_argument("data")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--draws", type=int, default=None, help="Halton draws per observation (default 1000)")
    p.add_argument("--out", help="write PREFIX.txt, PREFIX.tsv and PREFIX.manifest.json")
    p.add_argument("--workers", type=int, default=1, help="threads for likelihood evaluation")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="generate synthetic data at known parameters")
    p.add_argument("spec")
    p.add_argument("truth", help="'paper' or a file of name<TAB>value lines")
    p.add_argument("out")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--continuous", action="store_true", help="keep indicators continuous (no Likert rounding)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (HybridChoiceError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
