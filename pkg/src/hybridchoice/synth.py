"""Synthetic populations generated from a model spec at known parameters,
and a Gauss-Hermite quadrature oracle for the simulated likelihoods."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Mapping

import numpy as np
from scipy.special import logsumexp

from .dataset import Dataset, Observation
from .errors import DomainError, UnsupportedDimensionError
from .likelihood import (
    LikelihoodValue, measurement_loglik, membership_probabilities, mnl_probabilities, spec_measurements,
    structural_value, systematic_utility,
)
from .modelspec import ModelSpec, ParameterVector, validate

# Sample shares of the 72 fused observations. Groups list mutually exclusive
# dummies; any remaining probability is the all-zero reference level.
PAPER_GROUPS: dict[str, dict[str, float]] = {
    "age": {"Young": 29 / 72, "MiddleAge": 10 / 72},
    "gender": {"Male": 34 / 72},
    "marital": {"Single": 45 / 72},
    "education": {"Sec_school": 30 / 72, "HigherEdu": 18 / 72},
    "income": {"LowIncome": 39 / 72, "HighIncome": 11 / 72},
    "household": {"Hhld_L": 44 / 72, "Hhld_H": 28 / 72},
    "car": {"Car": 4 / 72},
    "in_vehicle": {"InVeh_less": 19 / 72, "InVeh_more": 28 / 72},
    "purpose": {"WorkTrip": 29 / 72, "NonworkTrip": 11 / 72, "MixedTrip": 32 / 72},
    "night_mode": {"ActiveMode": 25 / 72, "FixedService": 14 / 72},
    "assigned": {"Assigned_L": 46 / 72, "Assigned_H": 10 / 72},
    "unassigned": {"Unassigned_L": 46 / 72, "Unassigned_H": 10 / 72},
    "waiting": {"Waiting_L": 19 / 72, "Waiting_H": 25 / 72},
}


@dataclass(frozen=True)
class GeneratorConfig:
    """Everything needed to draw a synthetic dataset.

    ``groups`` maps a group name to its exclusive dummies and their
    probabilities. ``likert`` rounds and clamps indicators to 1..5.
    """

    n: int
    spec: ModelSpec
    truth: ParameterVector
    seed: int = 0
    groups: Mapping[str, Mapping[str, float]] = field(default_factory=lambda: PAPER_GROUPS)
    likert: bool = True
    id_prefix: str = "s"

    def __post_init__(self):
        if self.n < 0:
            raise DomainError("n must be nonnegative")
        for name, dummies in self.groups.items():
            for d, p in dummies.items():
                if not 0.0 <= p <= 1.0:
                    raise DomainError(f"probability of {d} outside [0, 1]")
            if sum(dummies.values()) > 1.0 + 1e-12:
                raise DomainError(f"group {name} probabilities sum above 1")
        if self.truth.names != self.spec.parameters.names:
            raise DomainError("truth must list the spec's parameters in order")

    @property
    def covariates(self) -> list[str]:
        return [d for dummies in self.groups.values() for d in dummies]


@dataclass(frozen=True)
class GenerationReport:
    dataset: Dataset
    clamped_share: float
    classes: np.ndarray


def _draw_covariates(cfg: GeneratorConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    out = {}
    for dummies in cfg.groups.values():
        names = list(dummies)
        probs = np.array([dummies[d] for d in names] + [max(0.0, 1.0 - sum(dummies.values()))])
        probs = probs / probs.sum()
        level = rng.choice(len(probs), size=cfg.n, p=probs)
        for j, d in enumerate(names):
            out[d] = (level == j).astype(float)
    return out


def generate_with_report(cfg: GeneratorConfig) -> GenerationReport:
    spec, truth = cfg.spec, cfg.truth
    missing = [c for c in spec.covariate_names() if c not in cfg.covariates]
    if missing:
        raise DomainError(f"no marginals for covariate(s): {', '.join(missing)}")
    findings = [f for f in validate(spec) if f.kind != "unused-parameter"]
    if findings:
        raise DomainError("; ".join(str(f) for f in findings))

    rng = np.random.default_rng(cfg.seed)
    cov = _draw_covariates(cfg, rng)
    n = cfg.n
    covariate_names = cfg.covariates
    n_lat = len(spec.latent_variables)
    omega = rng.standard_normal((n, n_lat))
    measurements = spec_measurements(spec)
    eps = rng.standard_normal((n, len(measurements)))
    class_u = rng.random(n)
    choice_u = rng.random(n)

    observations = []
    clamped = 0
    drawn = 0
    classes = np.zeros(n, dtype=int)
    alt_ids = [a for a, _ in spec.alternatives]
    class_list = spec.class_list()
    for i in range(n):
        covariates = {c: float(cov[c][i]) for c in covariate_names}
        obs = Observation(f"{cfg.id_prefix}{i + 1:06d}", None, covariates)
        lv = {latent.name: structural_value(obs, latent, truth, float(omega[i, l]))
              for l, latent in enumerate(spec.latent_variables)}
        indicators = {}
        for m, (latent, eq) in enumerate(measurements):
            value = (truth.value(eq.intercept) + truth.value(eq.loading) * lv[latent]
                     + abs(truth.value(eq.scale)) * eps[i, m])
            if cfg.likert:
                rounded = float(np.clip(np.rint(value), 1, 5))
                clamped += value < 0.5 or value > 5.5
                value = rounded
            drawn += 1
            indicators[eq.indicator] = value
        if len(class_list) > 1:
            pi = membership_probabilities(obs, class_list, truth)
            c = min(int(np.searchsorted(np.cumsum(pi), class_u[i], side="right")), len(pi) - 1)
        else:
            c = 0
        classes[i] = c
        cls = class_list[c]
        v = [systematic_utility(obs, cls.utilities.get(a, ()), truth, lv) for a in alt_ids]
        p = mnl_probabilities(v)
        j = min(int(np.searchsorted(np.cumsum(p), choice_u[i], side="right")), len(p) - 1)
        observations.append(Observation(obs.id, alt_ids[j], covariates, indicators))

    variables = {c: "binary" for c in covariate_names}
    variables.update({eq.indicator: "likert" if cfg.likert else "indicator" for _, eq in measurements})
    data = Dataset(tuple(observations), variables, spec.alternatives)
    return GenerationReport(data, clamped / drawn if drawn else 0.0, classes)


def generate(cfg: GeneratorConfig) -> Dataset:
    """Draw covariates, latent values, indicators, classes and choices."""
    return generate_with_report(cfg).dataset


def gauss_hermite(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for expectations under the standard normal."""
    if not 1 <= nodes <= 64:
        raise DomainError("nodes must be between 1 and 64")
    x, w = np.polynomial.hermite.hermgauss(nodes)
    return math.sqrt(2.0) * x, w / math.sqrt(math.pi)


def quadrature_loglik(data: Dataset, spec: ModelSpec, params: ParameterVector | None = None,
                      nodes: int = 32) -> LikelihoodValue:
    """Log-likelihood with the latent integral done by tensor-product
    Gauss-Hermite quadrature instead of simulation.

    Evaluated observation by observation with the scalar kernels, so it is
    independent of the vectorized engine.
    """
    params = params if params is not None else spec.parameters
    dims = len(spec.latent_variables)
    if dims > 2:
        raise UnsupportedDimensionError(f"quadrature supports at most 2 latent variables, got {dims}")
    x, w = gauss_hermite(nodes)
    grid = list(product(range(nodes), repeat=dims))
    measurements = spec_measurements(spec)
    class_list = spec.class_list()
    alt_ids = [a for a, _ in spec.alternatives]
    per_obs = []
    for obs in data:
        pi = membership_probabilities(obs, class_list, params) if len(class_list) > 1 else np.ones(1)
        y = alt_ids.index(obs.choice)
        terms = []
        for idx in grid:
            log_weight = sum(math.log(w[k]) for k in idx)
            lv = {latent.name: structural_value(obs, latent, params, float(x[k]))
                  for latent, k in zip(spec.latent_variables, idx)}
            log_mix = []
            for c, cls in enumerate(class_list):
                v = np.array([systematic_utility(obs, cls.utilities.get(a, ()), params, lv) for a in alt_ids])
                with np.errstate(divide="ignore"):
                    log_mix.append(math.log(pi[c]) if pi[c] > 0 else -np.inf)
                log_mix[-1] += v[y] - logsumexp(v)
            terms.append(log_weight + logsumexp(log_mix) + measurement_loglik(obs, lv, measurements, params))
        per_obs.append(float(logsumexp(terms)))
    per_obs = np.array(per_obs)
    return LikelihoodValue(float(per_obs.sum()), per_obs)


# --------------------------------------------------------------------------
# Recovery studies
# --------------------------------------------------------------------------

DEGENERATE_TRUTH = 10.0


@dataclass
class Replication:
    seed: int
    converged: bool
    iterations: int
    ll_final: float
    estimates: dict[str, float]
    robust_se: dict[str, float]
    within: dict[str, bool]
    seconds: float = 0.0


def recovered(truth: float, est: float, se: float, *, n_se: float = 3.0,
              degenerate: float = DEGENERATE_TRUTH) -> bool:
    """Within ``n_se`` robust SEs of truth; for ``|truth| > degenerate``
    only the sign and ``|est| > degenerate / 2`` are checked."""
    if abs(truth) > degenerate:
        return bool(np.sign(est) == np.sign(truth) and abs(est) > degenerate / 2)
    return bool(np.isfinite(est) and np.isfinite(se) and abs(est - truth) <= n_se * se)


def scale_parameters(spec: ModelSpec) -> set[str]:
    """Parameters entering the likelihood only through their absolute value."""
    names = {lv.error_scale for lv in spec.latent_variables}
    return names | {eq.scale for _, eq in spec_measurements(spec)}


def recovery_study(spec: ModelSpec, truth: ParameterVector, *, n: int, reps: int, seed: int = 0,
                   n_draws: int = 1000, likert: bool = True, start_at_truth: bool = True,
                   progress=None) -> list[Replication]:
    """Generate ``reps`` datasets at ``truth`` and re-estimate each.

    Replication ``r`` uses seed ``seed + r`` for both data and draws.
    Estimation starts at the truth unless ``start_at_truth`` is false, in
    which case the spec's start values are used. Scale parameters are
    compared in absolute value since their sign is not identified.
    """
    import time

    from .estimator import estimate

    scales = scale_parameters(spec)
    out = []
    for r in range(reps):
        s = seed + r
        data = generate(GeneratorConfig(n, spec, truth, seed=s, likert=likert))
        t0 = time.perf_counter()
        res = estimate(data, spec, start=truth if start_at_truth else None, n_draws=n_draws, seed=s)
        within = {}
        for name, se in res.robust_se.items():
            t, e = truth.value(name), res.params.value(name)
            within[name] = recovered(abs(t), abs(e), se) if name in scales else recovered(t, e, se)
        rep = Replication(s, res.converged, res.iterations, res.ll_final, res.estimates, dict(res.robust_se),
                          within, time.perf_counter() - t0)
        out.append(rep)
        if progress is not None:
            progress(rep)
    return out


def coverage(replications: list[Replication]) -> dict[str, float]:
    """Share of replications in which each parameter was recovered."""
    if not replications:
        return {}
    names = replications[0].within
    return {k: float(np.mean([r.within[k] for r in replications])) for k in names}
