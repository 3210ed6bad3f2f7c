"""Text format for model specifications and data-preparation rules.

A model spec file is INI-like::

    [estimation]
    family = ICLV
    draws = 1000
    seed = 0

    [alternatives]
    1 = FRT
    2 = ODT

    [parameters]
    ASC_ODT = 0
    ALPHA_WAIT_IMPO = 0 fixed
    B_X = 0.5 lower=-1 upper=2

    [utility.2]
    ASC_ODT * CONSTANT
    B_TS * TIME_SEN

    [class.Captive.membership]
    G_CAP * CONSTANT

    [class.Captive.utility.2]
    ASC_ODT_C1 * CONSTANT

    [latent.TIME_SEN.structural]
    A_CONS_TS * CONSTANT
    sigma = SIGMA_TS

    [latent.TIME_SEN.measurement.WAIT_IMPO]
    intercept = ALPHA_WAIT_IMPO
    loading = BETA_WAIT_IMPO
    scale = SIGMA_WAIT_IMPO

Classes, latent variables and measurement equations keep the order of their
first section. A preparation rules file uses ``[prepare]``, ``[choice]``,
``[binning.<column>]`` and ``[encoding.<column>]`` sections.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import PAPER_CHOICE_MAPPING, PAPER_ENCODING_RULES, EncodingRule
from .errors import SpecificationError
from .modelspec import (
    INDICATORS, ClassSpec, LatentVariableSpec, MeasurementEq, ModelSpec, Parameter, ParameterVector, UtilityTerm,
    paper_presets,
)

_TERM = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*\*\s*([A-Za-z_][\w.]*)\s*$")


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(allow_no_value=True, delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",), interpolation=None, strict=True)
    cp.optionxform = str
    return cp


def _fmt(value: float) -> str:
    return repr(float(value))


# --------------------------------------------------------------------------
# Model specs
# --------------------------------------------------------------------------

def _parse_terms(section, where: str) -> tuple[list[UtilityTerm], dict[str, str]]:
    terms, options = [], {}
    for key, value in section.items():
        if value is None:
            m = _TERM.match(key)
            if not m:
                raise SpecificationError(f"[{where}]: cannot parse term {key!r}; expected 'PARAM * VARIABLE'")
            terms.append(UtilityTerm(m.group(1), m.group(2)))
        else:
            options[key] = value.strip()
    return terms, options


def _parse_parameter(name: str, text: str | None) -> Parameter:
    if text is None:
        raise SpecificationError(f"parameter {name!r} needs a value")
    tokens = text.split()
    if not tokens:
        raise SpecificationError(f"parameter {name!r} needs a value")
    try:
        value = float(tokens[0])
        fixed, lower, upper = False, None, None
        for tok in tokens[1:]:
            if tok == "fixed":
                fixed = True
            elif tok.startswith("lower="):
                lower = float(tok[6:])
            elif tok.startswith("upper="):
                upper = float(tok[6:])
            else:
                raise ValueError(tok)
    except ValueError as exc:
        raise SpecificationError(f"parameter {name!r}: cannot parse {text!r} ({exc})") from None
    return Parameter(name, value, fixed, lower, upper)


def parse_spec(text: str) -> ModelSpec:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SpecificationError(f"spec file: {exc}") from None
    if "estimation" not in cp:
        raise SpecificationError("spec file lacks an [estimation] section")
    est = cp["estimation"]
    family = est.get("family", "").strip().upper().replace("-", "_")
    try:
        draws = int(est.get("draws", "1000"))
        seed = int(est.get("seed", "0"))
    except ValueError as exc:
        raise SpecificationError(f"[estimation]: {exc}") from None
    name = est.get("name", "") or ""

    if "alternatives" not in cp:
        raise SpecificationError("spec file lacks an [alternatives] section")
    try:
        alternatives = tuple((int(k), v.strip()) for k, v in cp["alternatives"].items())
    except (ValueError, AttributeError):
        raise SpecificationError("[alternatives] lines must read 'INDEX = LABEL'") from None

    params = ParameterVector(_parse_parameter(k, v) for k, v in cp["parameters"].items()) \
        if "parameters" in cp else ParameterVector([])

    utilities: dict[int, tuple] = {}
    class_order: list[str] = []
    memberships: dict[str, list[UtilityTerm]] = {}
    class_utils: dict[str, dict[int, tuple]] = {}
    latent_order: list[str] = []
    structural: dict[str, tuple[list[UtilityTerm], str]] = {}
    measures: dict[str, list[MeasurementEq]] = {}

    for sec in cp.sections():
        parts = sec.split(".")
        body = cp[sec]
        if sec in ("estimation", "alternatives", "parameters"):
            continue
        if parts[0] == "utility" and len(parts) == 2:
            terms, _ = _parse_terms(body, sec)
            utilities[_alt(parts[1], sec)] = tuple(terms)
        elif parts[0] == "class" and len(parts) >= 3:
            label = parts[1]
            if label not in class_order:
                class_order.append(label)
                memberships[label] = []
                class_utils[label] = {}
            terms, _ = _parse_terms(body, sec)
            if parts[2] == "membership" and len(parts) == 3:
                memberships[label] = terms
            elif parts[2] == "utility" and len(parts) == 4:
                class_utils[label][_alt(parts[3], sec)] = tuple(terms)
            else:
                raise SpecificationError(f"unknown section [{sec}]")
        elif parts[0] == "latent" and len(parts) >= 3:
            lname = parts[1]
            if lname not in latent_order:
                latent_order.append(lname)
                measures[lname] = []
            if parts[2] == "structural" and len(parts) == 3:
                terms, options = _parse_terms(body, sec)
                if "sigma" not in options:
                    raise SpecificationError(f"[{sec}] needs 'sigma = PARAMETER'")
                structural[lname] = (terms, options["sigma"])
            elif parts[2] == "measurement" and len(parts) == 4:
                try:
                    measures[lname].append(MeasurementEq(parts[3], body["intercept"].strip(),
                                                         body["loading"].strip(), body["scale"].strip()))
                except (KeyError, AttributeError):
                    raise SpecificationError(f"[{sec}] needs intercept, loading and scale") from None
            else:
                raise SpecificationError(f"unknown section [{sec}]")
        else:
            raise SpecificationError(f"unknown section [{sec}]")

    classes = tuple(ClassSpec(lbl, tuple(memberships[lbl]), class_utils[lbl]) for lbl in class_order)
    latents = []
    for lname in latent_order:
        if lname not in structural:
            raise SpecificationError(f"latent {lname} lacks a structural section")
        terms, sigma = structural[lname]
        latents.append(LatentVariableSpec(lname, tuple(terms), sigma, tuple(measures[lname])))
    return ModelSpec(family, params, alternatives, utilities, classes, tuple(latents), draws, seed, name)


def _alt(text: str, sec: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise SpecificationError(f"[{sec}]: alternative must be an index") from None


def dump_spec(spec: ModelSpec) -> str:
    lines = ["[estimation]", f"family = {spec.family}", f"draws = {spec.draws}", f"seed = {spec.seed}"]
    if spec.name:
        lines.append(f"name = {spec.name}")
    lines += ["", "[alternatives]"] + [f"{a} = {label}" for a, label in spec.alternatives]
    lines += ["", "[parameters]"]
    for p in spec.parameters:
        text = f"{p.name} = {_fmt(p.value)}"
        if p.fixed:
            text += " fixed"
        if p.lower is not None:
            text += f" lower={_fmt(p.lower)}"
        if p.upper is not None:
            text += f" upper={_fmt(p.upper)}"
        lines.append(text)

    def terms(ts):
        return [f"{t.parameter} * {t.variable}" for t in ts]

    for alt, ts in spec.utilities.items():
        lines += ["", f"[utility.{alt}]"] + terms(ts)
    for cls in spec.classes:
        if cls.membership_terms:
            lines += ["", f"[class.{cls.label}.membership]"] + terms(cls.membership_terms)
        for alt, ts in cls.utilities.items():
            lines += ["", f"[class.{cls.label}.utility.{alt}]"] + terms(ts)
        if not cls.membership_terms and not cls.utilities:
            lines += ["", f"[class.{cls.label}.membership]"]
    for lv in spec.latent_variables:
        lines += ["", f"[latent.{lv.name}.structural]"] + terms(lv.structural_terms) + [f"sigma = {lv.error_scale}"]
        for m in lv.measurements:
            lines += ["", f"[latent.{lv.name}.measurement.{m.indicator}]", f"intercept = {m.intercept}",
                      f"loading = {m.loading}", f"scale = {m.scale}"]
    return "\n".join(lines) + "\n"


def load_spec(source: str | Path) -> ModelSpec:
    """Read a spec file, or ``preset:FAMILY`` for a built-in preset."""
    text = str(source)
    if text.startswith("preset:"):
        family = text.split(":", 1)[1].strip().upper().replace("-", "_")
        presets = paper_presets()
        if family not in presets:
            raise SpecificationError(f"unknown preset {family!r}; choose from {', '.join(presets)}")
        return presets[family]
    try:
        return parse_spec(Path(source).read_text(encoding="utf-8"))
    except OSError as exc:
        raise SpecificationError(f"cannot read spec file {source}: {exc}") from None


def save_spec(spec: ModelSpec, path: str | Path) -> None:
    Path(path).write_text(dump_spec(spec), encoding="utf-8")


# --------------------------------------------------------------------------
# Preparation rules
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BinningRule:
    """Cluster ``column`` into ordered ``labels`` stored in ``target``.

    ``k`` of ``None`` selects the count by the elbow rule up to ``k_max``;
    labels are then taken from the front of the list.
    """

    column: str
    target: str
    labels: tuple[str, ...]
    k: int | None = None
    k_max: int = 8
    seed: int = 0


@dataclass(frozen=True)
class PrepareConfig:
    key: str = "email"
    indicators: tuple[str, ...] = INDICATORS
    choice_source: str = "prefer_frt"
    choice_mapping: dict[str, int] = field(default_factory=lambda: dict(PAPER_CHOICE_MAPPING))
    binning: tuple[BinningRule, ...] = ()
    encoding: tuple[EncodingRule, ...] = PAPER_ENCODING_RULES
    categorical_checks: tuple[str, ...] = ("age", "gender", "income", "household_size")


PAPER_BINNING = (
    BinningRule("assigned_trips", "assigned_level", ("Low", "Medium", "High"), k=3),
    BinningRule("unassigned_trips", "unassigned_level", ("Low", "Medium", "High", "Very High"), k=4),
    BinningRule("waiting_time", "waiting_level", ("Low", "Medium", "High", "Very High"), k=4),
)

PAPER_PREPARE = PrepareConfig(binning=PAPER_BINNING)


def _split(text: str) -> list[str]:
    return [t.strip() for t in text.split("|") if t.strip()]


def parse_rules(text: str) -> PrepareConfig:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SpecificationError(f"rules file: {exc}") from None
    prep = cp["prepare"] if "prepare" in cp else {}
    key = (prep.get("key") or "email").strip()
    indicators = tuple(t.strip() for t in (prep.get("indicators") or ",".join(INDICATORS)).split(",") if t.strip())
    checks = tuple(t.strip() for t in (prep.get("categorical_checks") or "").split(",") if t.strip())

    choice_source, mapping = "prefer_frt", dict(PAPER_CHOICE_MAPPING)
    if "choice" in cp:
        sec = cp["choice"]
        choice_source = (sec.get("source") or choice_source).strip()
        mapping = {}
        for k, v in sec.items():
            if k == "source":
                continue
            try:
                alt = int(k)
            except ValueError:
                raise SpecificationError(f"[choice]: {k!r} is not an alternative index") from None
            for answer in _split(v or ""):
                mapping[answer] = alt

    binning, encoding = [], []
    for sec in cp.sections():
        if sec.startswith("binning."):
            b = cp[sec]
            col = sec.split(".", 1)[1]
            k_text = (b.get("k") or "elbow").strip()
            try:
                binning.append(BinningRule(
                    col, (b.get("target") or f"{col}_level").strip(),
                    tuple(t.strip() for t in (b.get("labels") or "").split(",") if t.strip()),
                    None if k_text == "elbow" else int(k_text),
                    int(b.get("k_max") or 8), int(b.get("seed") or 0),
                ))
            except ValueError as exc:
                raise SpecificationError(f"[{sec}]: {exc}") from None
        elif sec.startswith("encoding."):
            col = sec.split(".", 1)[1]
            categories: dict[str, str | None] = {}
            for target, cats in cp[sec].items():
                for cat in _split(cats or ""):
                    categories[cat] = None if target == "reference" else target
            encoding.append(EncodingRule(col, categories))
        elif sec not in ("prepare", "choice"):
            raise SpecificationError(f"unknown section [{sec}] in rules file")
    return PrepareConfig(key, indicators, choice_source, mapping, tuple(binning),
                         tuple(encoding) if encoding else PAPER_ENCODING_RULES, checks)


def dump_rules(cfg: PrepareConfig) -> str:
    lines = ["[prepare]", f"key = {cfg.key}", f"indicators = {', '.join(cfg.indicators)}",
             f"categorical_checks = {', '.join(cfg.categorical_checks)}", "", "[choice]",
             f"source = {cfg.choice_source}"]
    by_alt: dict[int, list[str]] = {}
    for answer, alt in cfg.choice_mapping.items():
        by_alt.setdefault(alt, []).append(answer)
    lines += [f"{alt} = {' | '.join(answers)}" for alt, answers in sorted(by_alt.items())]
    for b in cfg.binning:
        lines += ["", f"[binning.{b.column}]", f"target = {b.target}", f"labels = {', '.join(b.labels)}",
                  f"k = {'elbow' if b.k is None else b.k}", f"k_max = {b.k_max}", f"seed = {b.seed}"]
    for rule in cfg.encoding:
        lines += ["", f"[encoding.{rule.source}]"]
        groups: dict[str, list[str]] = {}
        for cat, target in rule.categories.items():
            groups.setdefault(target or "reference", []).append(cat)
        lines += [f"{target} = {' | '.join(cats)}" for target, cats in groups.items()]
    return "\n".join(lines) + "\n"


def load_rules(source: str | Path) -> PrepareConfig:
    if str(source) == "paper":
        return PAPER_PREPARE
    try:
        return parse_rules(Path(source).read_text(encoding="utf-8"))
    except OSError as exc:
        raise SpecificationError(f"cannot read rules file {source}: {exc}") from None
