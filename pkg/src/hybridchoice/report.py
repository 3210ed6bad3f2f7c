"""Human-readable and machine-readable estimation reports, and run manifests."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .estimator import EstimationResult

FOOTNOTE_95 = "* Not statistically significant at 95% confidence level"
FOOTNOTE_90 = "** Not statistically significant at 90% confidence level"


def sig3(value: float) -> str:
    """Round to 3 significant figures for display (e.g. -2.61, 0.972, 13.5)."""
    if not math.isfinite(value):
        return str(value)
    if value == 0:
        return "0"
    digits = max(0, 2 - int(math.floor(math.log10(abs(value)))))
    text = f"{round(value, digits):.{digits}f}"
    # rounding can carry into another digit (9.996 -> 10.00)
    if digits and len(text.replace("-", "").replace(".", "").lstrip("0")) > 3:
        text = f"{round(value, digits - 1):.{digits - 1}f}"
    return text


def star(t: float) -> str:
    """Significance marker appended to a t-statistic."""
    if abs(t) >= 1.96:
        return ""
    return "*" if abs(t) >= 1.645 else "**"


def human_table(result: EstimationResult, *, title: str | None = None) -> str:
    rows = []
    for p in result.params:
        if p.fixed:
            rows.append((p.name, sig3(p.value), "(fixed)"))
        else:
            t = result.robust_t[p.name]
            rows.append((p.name, sig3(p.value), f"{t:.2f}{star(t)}"))
    w0 = max([len("Parameter")] + [len(r[0]) for r in rows])
    w1 = max([len("Estimate")] + [len(r[1]) for r in rows])
    w2 = max([len("Rob. t-test")] + [len(r[2]) for r in rows])
    rule = "-" * (w0 + w1 + w2 + 4)
    header = f"Observations: {result.n_obs}"
    if result.n_draws:
        header += f"   Draws: {result.n_draws}   Seed: {result.draw_seed}"
    out = [title or f"Model: {result.family}", header]
    if not result.converged:
        out.append(f"WARNING: estimation did not converge ({result.message})")
    if result.singular_hessian:
        out.append(f"WARNING: Hessian near-singular (condition {result.hessian_condition:.3g}); pseudo-inverse used")
    out += [rule, f"{'Parameter':<{w0}}  {'Estimate':>{w1}}  {'Rob. t-test':>{w2}}", rule]
    out += [f"{a:<{w0}}  {b:>{w1}}  {c:>{w2}}" for a, b, c in rows]
    out += [rule, "Performance Indicators",
            f"Number of parameters      {result.n_free}",
            f"Initial log-likelihood    {result.ll_initial:.2f}",
            f"Final log-likelihood      {result.ll_final:.2f}",
            f"Rho-square-bar            {result.rho_square_bar:.3f}",
            rule, FOOTNOTE_95, FOOTNOTE_90]
    return "\n".join(out) + "\n"


def machine_text(result: EstimationResult, *, extra: dict[str, object] | None = None) -> str:
    """Line-oriented ``name<TAB>value`` report at full precision."""
    meta = {
        "family": result.family,
        "n_obs": result.n_obs,
        "n_draws": result.n_draws,
        "seed": result.draw_seed,
        "n_free": result.n_free,
        "ll_initial": repr(float(result.ll_initial)),
        "ll_final": repr(float(result.ll_final)),
        "rho_square_bar": repr(float(result.rho_square_bar)),
        "converged": str(result.converged).lower(),
        "iterations": result.iterations,
        "gradient_norm": repr(float(result.gradient_norm)),
        "singular_hessian": str(result.singular_hessian).lower(),
    }
    meta.update(extra or {})
    lines = ["[metadata]"] + [f"{k}\t{v}" for k, v in meta.items()]
    lines += ["", "[estimates]"] + [f"{p.name}\t{float(p.value)!r}" for p in result.params]
    lines += ["", "[fixed]"] + [p.name for p in result.params if p.fixed]
    lines += ["", "[robust_se]"] + [f"{k}\t{float(v)!r}" for k, v in result.robust_se.items()]
    lines += ["", "[robust_t]"] + [f"{k}\t{float(v)!r}" for k, v in result.robust_t.items()]
    return "\n".join(lines) + "\n"


def read_machine_text(text: str) -> dict[str, dict[str, str]]:
    """Parse a machine report back into ``{section: {name: value}}``."""
    sections: dict[str, dict[str, str]] = {}
    current = None
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("[") and line.endswith("]"):
            current = sections.setdefault(line[1:-1], {})
        elif current is not None:
            name, _, value = line.partition("\t")
            current[name] = value
    return sections


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    inputs: dict[str, str]
    seed: int | None
    n_draws: int | None
    version: str
    wall_time: float = 0.0
    outputs: list[str] = field(default_factory=list)
    status: str = "ok"

    @classmethod
    def for_inputs(cls, command: str, paths: list[str | Path], **kwargs) -> "RunManifest":
        return cls(command, {str(p): sha256_file(p) for p in paths}, **kwargs)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"
