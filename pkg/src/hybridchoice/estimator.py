"""Maximum (simulated) likelihood estimation, robust inference and the
warm-start pipeline from simple to complex models."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .dataset import Dataset
from .errors import DomainError, NumericDomainError
from .likelihood import DrawSet, Objective, halton_draws
from .modelspec import ModelSpec, ParameterVector, base_name, paper_presets, require_valid

log = logging.getLogger(__name__)

TOL = 1e-6
MAX_ITER = 500
ARMIJO = 1e-4
MAX_HALVINGS = 40
HESSIAN_STEP = 1e-4
SINGULAR_COND = 1e12
JITTER = 0.1


# --------------------------------------------------------------------------
# Optimizer
# --------------------------------------------------------------------------

@dataclass
class OptimizeResult:
    x: np.ndarray
    value: float
    gradient: np.ndarray
    converged: bool
    iterations: int
    message: str
    history: list[float] = field(default_factory=list)

    @property
    def gradient_norm(self) -> float:
        return float(np.max(np.abs(self.gradient))) if self.gradient.size else 0.0


def _safe(fun, x):
    try:
        f, g = fun(x)
    except (NumericDomainError, FloatingPointError, OverflowError):
        return -np.inf, None
    if not np.isfinite(f) or g is None or not np.all(np.isfinite(g)):
        return -np.inf, None
    return f, g


def bfgs_maximize(fun: Callable[[np.ndarray], tuple[float, np.ndarray]], x0, *, tol: float = TOL,
                  max_iter: int = MAX_ITER, inverse_hessian: np.ndarray | None = None) -> OptimizeResult:
    """Maximize ``fun`` (returning value and gradient) by BFGS with an
    Armijo backtracking line search.

    ``inverse_hessian`` is an optional positive-definite starting
    approximation of the inverse negative Hessian. Non-finite trial points
    are treated as failed and the step is halved. Accepted iterates never
    decrease the objective.
    """
    x = np.array(x0, dtype=float)
    f, g = _safe(fun, x)
    if g is None:
        raise DomainError("objective is not finite at the starting point")
    n = x.size
    history = [f]
    if n == 0:
        return OptimizeResult(x, f, g, True, 0, "no free parameters", history)
    h = np.array(inverse_hessian, dtype=float) if inverse_hessian is not None else None
    scaled = h is not None
    if h is None:
        h = np.eye(n) / max(1.0, float(np.max(np.abs(g))))
    message = "iteration limit reached"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) < tol:
            converged, message, it = True, "gradient below tolerance", it - 1
            break
        d = h @ g
        slope = float(g @ d)
        if slope <= 0:
            h = np.eye(n) / max(1.0, float(np.max(np.abs(g))))
            d, slope = h @ g, float(g @ (h @ g))
        t = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS):
            x_new = x + t * d
            f_new, g_new = _safe(fun, x_new)
            if g_new is not None and f_new >= f + ARMIJO * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # Rounding can hide an ascent of order 1e-12 near the optimum;
            # take the full step if it does not lower the objective and
            # reduces the gradient.
            x_new = x + d
            f_new, g_new = _safe(fun, x_new)
            if g_new is None or f_new < f or np.max(np.abs(g_new)) >= np.max(np.abs(g)):
                message = "line search failed"
                it -= 1
                break
        s = x_new - x
        yv = g - g_new  # change in the gradient of -f
        sy = float(s @ yv)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(yv)):
            if not scaled:
                h = np.eye(n) * sy / float(yv @ yv)
                scaled = True
            rho = 1.0 / sy
            hy = h @ yv
            h = h - rho * (np.outer(s, hy) + np.outer(hy, s)) + (rho * rho * float(yv @ hy) + rho) * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
        history.append(f)
    else:
        if np.max(np.abs(g)) < tol:
            converged, message = True, "gradient below tolerance"
    return OptimizeResult(x, f, g, converged, it, message, history)


# --------------------------------------------------------------------------
# Inference
# --------------------------------------------------------------------------

@dataclass
class CovarianceResult:
    covariance: np.ndarray
    hessian: np.ndarray
    outer_product: np.ndarray
    condition: float
    singular: bool


def numeric_hessian(grad: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                    rel_step: float = HESSIAN_STEP) -> np.ndarray:
    """Central differences of an analytic gradient; step ``rel_step * max(|x|, 1)``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    hess = np.empty((n, n))
    for k in range(n):
        step = rel_step * max(abs(x[k]), 1.0)
        e = np.zeros(n)
        e[k] = step
        hess[:, k] = (grad(x + e) - grad(x - e)) / (2.0 * step)
    return 0.5 * (hess + hess.T)


def sandwich(hessian: np.ndarray, scores: np.ndarray) -> CovarianceResult:
    """``H^-1 B H^-1`` with ``B`` the sum of outer products of the
    per-observation gradients ``scores`` (N x K)."""
    b = scores.T @ scores
    k = hessian.shape[0]
    if k == 0:
        return CovarianceResult(np.zeros((0, 0)), hessian, b, 1.0, False)
    try:
        cond = float(np.linalg.cond(hessian))
    except np.linalg.LinAlgError:
        cond = math.inf
    singular = not np.isfinite(cond) or cond > SINGULAR_COND
    if singular:
        h_inv = np.linalg.pinv(hessian)
    else:
        h_inv = np.linalg.inv(hessian)
    cov = h_inv @ b @ h_inv
    return CovarianceResult(0.5 * (cov + cov.T), hessian, b, cond, singular)


def robust_covariance(objective: Objective, x: np.ndarray) -> CovarianceResult:
    hess = numeric_hessian(lambda z: objective.value_and_gradient(z)[1], x)
    _, scores = objective.per_observation(x)
    return sandwich(hess, scores)


def rho_square_bar(ll_final: float, ll_initial: float, k: int) -> float:
    if ll_initial >= 0:
        raise DomainError("initial log-likelihood must be negative")
    return 1.0 - (ll_final - k) / ll_initial


def significance(t: float) -> str:
    a = abs(t)
    if a >= 1.96:
        return "95%"
    if a >= 1.645:
        return "90%"
    return "none"


@dataclass
class EstimationResult:
    family: str
    params: ParameterVector
    robust_se: dict[str, float]
    robust_t: dict[str, float]
    significance: dict[str, str]
    ll_initial: float
    ll_final: float
    rho_square_bar: float
    n_free: int
    converged: bool
    iterations: int
    gradient_norm: float
    n_obs: int = 0
    covariance: np.ndarray | None = None
    singular_hessian: bool = False
    hessian_condition: float = 0.0
    n_draws: int = 0
    draw_seed: int | None = None
    message: str = ""
    history: list[float] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def estimates(self) -> dict[str, float]:
        return self.params.as_dict()


def estimate(data: Dataset, spec: ModelSpec, *, start: ParameterVector | None = None,
             draws: DrawSet | None = None, n_draws: int = 1000, seed: int = 0,
             tol: float = TOL, max_iter: int = MAX_ITER, workers: int = 1,
             covariance: bool = True) -> EstimationResult:
    """Estimate ``spec`` on ``data``.

    ``start`` overrides the spec's start values (same names and layout).
    The initial log-likelihood is evaluated at the spec's own start values.
    Latent-variable models draw ``n_draws`` scrambled Halton points per
    observation with ``seed`` unless ``draws`` is supplied.
    """
    require_valid(spec, data)
    if spec.latent_variables and draws is None:
        draws = halton_draws(len(data), n_draws, len(spec.latent_variables), seed=seed)
    start = start if start is not None else spec.parameters
    objective = Objective(data, spec, draws, params=start, workers=workers)
    ll_initial = Objective(data, spec, draws, workers=workers).value(spec.parameters.free_values())

    x0 = start.free_values()
    h0 = None
    if x0.size:
        _, scores = objective.per_observation(x0)
        b = scores.T @ scores
        h0 = np.linalg.inv(b + 1e-6 * max(1.0, float(np.trace(b)) / x0.size) * np.eye(x0.size))
    opt = bfgs_maximize(objective.value_and_gradient, x0, tol=tol, max_iter=max_iter, inverse_hessian=h0)
    params = objective.parameters_at(opt.x)
    free = objective.free_names
    se, tstat, sig = {}, {}, {}
    cov = None
    singular, cond = False, 0.0
    notes = []
    if covariance and free:
        cres = robust_covariance(objective, opt.x)
        cov, singular, cond = cres.covariance, cres.singular, cres.condition
        if singular:
            notes.append(f"Hessian near-singular (condition {cond:.3g}); pseudo-inverse used")
            log.warning(notes[-1])
        diag = np.clip(np.diag(cov), 0.0, None)
        for k, name in enumerate(free):
            se[name] = float(math.sqrt(diag[k]))
            tstat[name] = float(opt.x[k] / se[name]) if se[name] > 0 else math.copysign(math.inf, opt.x[k]) if opt.x[k] else 0.0
            sig[name] = significance(tstat[name])
    n_free = len(free)
    return EstimationResult(
        family=spec.family, params=params, robust_se=se, robust_t=tstat, significance=sig,
        ll_initial=ll_initial, ll_final=opt.value,
        rho_square_bar=rho_square_bar(opt.value, ll_initial, n_free) if ll_initial < 0 else math.nan,
        n_free=n_free, converged=opt.converged, iterations=opt.iterations, gradient_norm=opt.gradient_norm,
        n_obs=len(data), covariance=cov, singular_hessian=singular, hessian_condition=cond,
        n_draws=draws.n_draws if draws is not None else 0, draw_seed=draws.seed if draws is not None else None,
        message=opt.message, history=opt.history, notes=notes,
    )


# --------------------------------------------------------------------------
# Warm starts
# --------------------------------------------------------------------------

def measurement_start_values(data: Dataset, spec: ModelSpec) -> dict[str, float]:
    """Moment-based start values for the latent variable block.

    Each latent's structural constant starts at its anchor indicator's mean.
    Other indicators regress on the anchor for loading and intercept; the
    residual spread gives the scale.
    """
    values = {}
    for lv in spec.latent_variables:
        anchor = lv.measurements[0]
        for m in lv.measurements:
            p = spec.parameters
            if p[m.intercept].fixed and p[m.loading].fixed:
                anchor = m
                break
        a = data.indicator_matrix([anchor.indicator])[:, 0]
        const = [t.parameter for t in lv.structural_terms if t.variable == "CONSTANT"]
        if const and np.any(~np.isnan(a)):
            values[const[0]] = float(np.nanmean(a))
        for m in lv.measurements:
            if m is anchor or spec.parameters[m.loading].fixed:
                continue
            x = data.indicator_matrix([m.indicator])[:, 0]
            ok = ~(np.isnan(x) | np.isnan(a))
            if ok.sum() < 3 or np.var(a[ok]) == 0:
                continue
            beta = float(np.cov(x[ok], a[ok])[0, 1] / np.var(a[ok], ddof=1))
            alpha = float(x[ok].mean() - beta * a[ok].mean())
            resid = x[ok] - alpha - beta * a[ok]
            values[m.loading] = beta
            values[m.intercept] = alpha
            values[m.scale] = max(float(resid.std()), 0.1)
    return values


def _free_update(params: ParameterVector, values: Mapping[str, float]) -> ParameterVector:
    keep = {k: v for k, v in values.items() if k in params and not params[k].fixed}
    return params.with_values(keep)


def _jittered_class_start(spec: ModelSpec, source: Mapping[str, float], rng: np.random.Generator) -> ParameterVector:
    values = {}
    for p in spec.parameters:
        if p.fixed:
            continue
        base = base_name(p.name)
        if p.name.startswith("G_"):
            continue
        values[p.name] = source.get(p.name, source.get(base, 0.0)) + rng.uniform(-JITTER, JITTER)
    return _free_update(spec.parameters, values)


@dataclass
class PipelineResult:
    results: dict[str, EstimationResult]
    provenance: list[str]
    flags: dict[str, bool]


def warm_start_pipeline(data: Dataset, presets: Mapping[str, ModelSpec] | None = None, *,
                        n_draws: int = 1000, seed: int = 0, tol: float = TOL, max_iter: int = MAX_ITER,
                        families: tuple[str, ...] = ("MNL", "LC", "ICLV", "LC_ICLV"),
                        workers: int = 1) -> PipelineResult:
    """Estimate the models in order of complexity, each seeded from the
    simpler ones.

    MNL starts from zeros. LC copies the MNL estimates into both classes with
    seeded uniform jitter of +-0.1. ICLV takes MNL estimates plus moment-based
    measurement starts. LC-ICLV combines the LC and ICLV estimates. A stage
    whose source did not converge still runs; the dependency is flagged.
    """
    presets = dict(presets or paper_presets())
    rng = np.random.default_rng(seed)
    results: dict[str, EstimationResult] = {}
    provenance: list[str] = []
    flags: dict[str, bool] = {}

    def run(fam, start, sources):
        spec = presets[fam]
        upstream = [s for s in sources if s in results and not results[s].converged]
        if upstream:
            flags[fam] = True
            provenance.append(f"{fam}: upstream {', '.join(upstream)} did not converge; using best available values")
        res = estimate(data, spec, start=start, n_draws=n_draws, seed=seed, tol=tol, max_iter=max_iter,
                       workers=workers)
        results[fam] = res
        provenance.append(f"{fam}: start from {', '.join(sources) if sources else 'spec start values'}; "
                          f"converged={res.converged} iterations={res.iterations} ll={res.ll_final:.6f}")

    mnl_est: dict[str, float] = {}
    if "MNL" in families:
        run("MNL", None, [])
        mnl_est = results["MNL"].estimates
    if "LC" in families:
        run("LC", _jittered_class_start(presets["LC"], mnl_est, rng), ["MNL"] if mnl_est else [])
    if "ICLV" in families:
        spec = presets["ICLV"]
        start = _free_update(spec.parameters, measurement_start_values(data, spec))
        start = _free_update(start, mnl_est)
        run("ICLV", start, ["MNL"] if mnl_est else [])
    if "LC_ICLV" in families:
        spec = presets["LC_ICLV"]
        start = _free_update(spec.parameters, measurement_start_values(data, spec))
        sources = []
        if "ICLV" in results:
            iclv = results["ICLV"].estimates
            start = _free_update(start, {k: v for k, v in iclv.items() if base_name(k) == k})
            start = _free_update(start, {p.name: iclv[base_name(p.name)] for p in spec.parameters
                                         if base_name(p.name) in iclv and base_name(p.name) != p.name})
            sources.append("ICLV")
        if "LC" in results:
            start = _free_update(start, results["LC"].estimates)
            sources.append("LC")
        run("LC_ICLV", start, sources)
    return PipelineResult(results, provenance, flags)
