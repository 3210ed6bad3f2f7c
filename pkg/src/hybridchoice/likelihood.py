"""Log-likelihoods and analytic gradients for MNL, LC, ICLV and LC-ICLV.

All four families share one engine. Per observation ``n`` the simulated
likelihood is

    L_n = (1/R) sum_r  M_nr * sum_c pi_nc * P_c(y_n | X_n, LV_nr)

with ``M_nr`` the product of measurement densities at the latent values of
draw ``r``. MNL is the case with one class and no latent variables (R = 1),
LC has several classes and no latent variables, ICLV has one class.
Everything is accumulated in log space.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp, ndtri
from scipy.stats import qmc

from .dataset import Dataset, Observation
from .errors import DomainError, NumericDomainError, SpecificationError
from .modelspec import CONSTANT, ClassSpec, LatentVariableSpec, MeasurementEq, ModelSpec, ParameterVector, UtilityTerm

LOG_2PI = math.log(2.0 * math.pi)
MAX_DIMS = 10
# Observations per evaluation block. Fixed so the reduction order, and hence
# every total, does not depend on the number of workers.
CHUNK_SIZE = 128


# --------------------------------------------------------------------------
# Draws
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DrawSet:
    """Standard-normal draws indexed (observation, draw, latent dimension)."""

    draws: np.ndarray
    n_draws: int
    seed: int | None
    skip: int

    @property
    def n_obs(self) -> int:
        return self.draws.shape[0]

    @property
    def dims(self) -> int:
        return self.draws.shape[2]

    def subset(self, rows: Sequence[int]) -> "DrawSet":
        return DrawSet(self.draws[np.asarray(rows)], self.n_draws, self.seed, self.skip)


def halton_uniforms(n_points: int, dims: int, skip: int = 10, seed: int | None = 0) -> np.ndarray:
    """Halton points in (0, 1), bases 2, 3, 5, ... per dimension.

    The origin point of the sequence is never used; ``skip`` further points
    are dropped after it. ``seed=None`` gives the plain sequence, otherwise
    digits are scrambled by seeded random permutations.
    """
    if not 1 <= dims <= MAX_DIMS:
        raise DomainError(f"dims must be between 1 and {MAX_DIMS}")
    if skip < 0:
        raise DomainError("skip must be nonnegative")
    if seed is None:
        engine = qmc.Halton(dims, scramble=False)
    else:
        engine = qmc.Halton(dims, scramble=True, rng=np.random.default_rng(seed))
    engine.fast_forward(1 + skip)
    u = engine.random(n_points)
    tiny = np.finfo(float).eps
    return np.clip(u, tiny, 1.0 - tiny)


def halton_draws(n_obs: int, n_draws: int, dims: int, skip: int = 10, seed: int | None = 0) -> DrawSet:
    """Quasi-random standard-normal draws; observation ``n`` gets the
    consecutive block of points ``n*n_draws ... (n+1)*n_draws - 1``."""
    if n_draws < 1:
        raise DomainError("n_draws must be positive")
    if n_obs < 0:
        raise DomainError("n_obs must be nonnegative")
    u = halton_uniforms(n_obs * n_draws, dims, skip, seed)
    z = ndtri(u).reshape(n_obs, n_draws, dims)
    return DrawSet(z, n_draws, seed, skip)


# --------------------------------------------------------------------------
# Scalar kernels
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LikelihoodValue:
    total: float
    per_observation: np.ndarray

    def __float__(self):
        return self.total


def _resolve(obs: Observation, variable: str, lv_values: Mapping[str, float]) -> float:
    if variable == CONSTANT:
        return 1.0
    if variable in lv_values:
        return float(lv_values[variable])
    if variable in obs.covariates:
        return float(obs.covariates[variable])
    raise SpecificationError(f"cannot resolve variable {variable!r} for observation {obs.id}")


def systematic_utility(obs: Observation, terms: Sequence[UtilityTerm], params: ParameterVector,
                       lv_values: Mapping[str, float] | None = None) -> float:
    lv_values = lv_values or {}
    return float(sum(params.value(t.parameter) * _resolve(obs, t.variable, lv_values) for t in terms))


def mnl_probabilities(utilities: Sequence[float]) -> np.ndarray:
    v = np.asarray(utilities, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NumericDomainError("non-finite utility")
    e = np.exp(v - v.max())
    return e / e.sum()


def membership_probabilities(obs: Observation, classes: Sequence[ClassSpec], params: ParameterVector) -> np.ndarray:
    refs = [c for c in classes if not c.membership_terms]
    if len(refs) != 1:
        raise SpecificationError("exactly one reference class is required")
    return mnl_probabilities([systematic_utility(obs, c.membership_terms, params) for c in classes])


def structural_value(obs: Observation, lv: LatentVariableSpec, params: ParameterVector, omega: float) -> float:
    if not math.isfinite(omega):
        raise NumericDomainError("non-finite disturbance")
    return systematic_utility(obs, lv.structural_terms, params) + abs(params.value(lv.error_scale)) * omega


def measurement_loglik(obs: Observation, lv_values: Mapping[str, float],
                       measurements: Sequence[tuple[str, MeasurementEq]] | Sequence[MeasurementEq],
                       params: ParameterVector, latent_of: Mapping[str, str] | None = None) -> float:
    """Sum of normal log-densities over the indicators present in ``obs``.

    ``measurements`` holds ``(latent name, equation)`` pairs, or bare
    equations together with ``latent_of`` mapping indicator to latent name.
    """
    total = 0.0
    for item in measurements:
        if isinstance(item, MeasurementEq):
            eq, latent = item, (latent_of or {})[item.indicator]
        else:
            latent, eq = item
        if eq.indicator not in obs.indicators:
            continue
        s = abs(params.value(eq.scale))
        if s == 0:
            raise NumericDomainError(f"measurement scale {eq.scale} is zero")
        e = obs.indicators[eq.indicator] - params.value(eq.intercept) - params.value(eq.loading) * lv_values[latent]
        total += -0.5 * LOG_2PI - math.log(s) - 0.5 * (e / s) ** 2
    return total


def spec_measurements(spec: ModelSpec) -> list[tuple[str, MeasurementEq]]:
    return [(lv.name, m) for lv in spec.latent_variables for m in lv.measurements]


# --------------------------------------------------------------------------
# Vectorized engine
# --------------------------------------------------------------------------

@dataclass
class _ClassBlock:
    design: np.ndarray          # (N, J, P_c) observable design
    obs_params: np.ndarray      # (P_c,) parameter indices
    latent_entries: list        # (alt position, latent position, parameter index)
    membership: np.ndarray | None   # (N, Q_c) or None for the reference class
    membership_params: np.ndarray


class Engine:
    """Compiled (data, spec, draws) triple evaluating the log-likelihood and
    its per-observation gradient with respect to the full parameter vector.
    """

    def __init__(self, data: Dataset, spec: ModelSpec, draws: DrawSet | None = None, *,
                 workers: int = 1, chunk_size: int = CHUNK_SIZE):
        self.data = data
        self.spec = spec
        self.names = spec.parameters.names
        self.index = {n: i for i, n in enumerate(self.names)}
        self.workers = max(1, int(workers))
        self.chunk_size = int(chunk_size)
        self.n_obs = len(data)
        self.n_params = len(self.names)
        alt_ids = [a for a, _ in spec.alternatives]
        self.alt_pos = {a: j for j, a in enumerate(alt_ids)}
        self.n_alts = len(alt_ids)
        self.latents = spec.latent_names
        self.lat_pos = {n: l for l, n in enumerate(self.latents)}
        self.n_lat = len(self.latents)

        if data.alternatives and [a for a, _ in data.alternatives] != alt_ids:
            raise SpecificationError("data and spec declare different alternatives")
        choices = data.choice_positions()
        self.y = np.asarray(choices, dtype=int)
        self.onehot = np.zeros((self.n_obs, self.n_alts))
        self.onehot[np.arange(self.n_obs), self.y] = 1.0

        if self.n_lat:
            if draws is None:
                raise DomainError("a model with latent variables needs a DrawSet")
            if draws.draws.shape[0] != self.n_obs or draws.dims != self.n_lat:
                raise DomainError(f"draws have shape {draws.draws.shape}, need ({self.n_obs}, R, {self.n_lat})")
            if draws.n_draws < 1:
                raise DomainError("R must be positive")
            self.omega = draws.draws
        else:
            self.omega = np.zeros((self.n_obs, 1, 0))
        self.n_draws = self.omega.shape[1]
        self.omega_by_dim = [np.ascontiguousarray(self.omega[:, :, l]) for l in range(self.n_lat)]

        self.classes = [self._compile_class(c) for c in spec.class_list()]
        self._compile_latents()

    # -- compilation -----------------------------------------------------

    def _column(self, variable: str) -> np.ndarray:
        if variable == CONSTANT:
            return np.ones(self.n_obs)
        if variable not in self.data.variables:
            raise SpecificationError(f"unknown variable {variable!r}")
        return self.data.column(variable)

    def _pidx(self, name: str) -> int:
        try:
            return self.index[name]
        except KeyError:
            raise SpecificationError(f"unknown parameter {name!r}") from None

    def _linear_block(self, terms: Sequence[UtilityTerm]):
        params = []
        cols = []
        for t in terms:
            k = self._pidx(t.parameter)
            if k in params:
                cols[params.index(k)] = cols[params.index(k)] + self._column(t.variable)
            else:
                params.append(k)
                cols.append(self._column(t.variable))
        z = np.column_stack(cols) if cols else np.zeros((self.n_obs, 0))
        return z, np.asarray(params, dtype=int)

    def _compile_class(self, cls: ClassSpec) -> _ClassBlock:
        params: list[int] = []
        latent_entries = []
        cells: dict[tuple[int, int], np.ndarray] = {}
        for alt, terms in cls.utilities.items():
            if alt not in self.alt_pos:
                raise SpecificationError(f"utility for undeclared alternative {alt}")
            j = self.alt_pos[alt]
            for t in terms:
                k = self._pidx(t.parameter)
                if t.variable in self.lat_pos:
                    latent_entries.append((j, self.lat_pos[t.variable], k))
                    continue
                if k not in params:
                    params.append(k)
                p = params.index(k)
                cells[(j, p)] = cells.get((j, p), 0.0) + self._column(t.variable)
        design = np.zeros((self.n_obs, self.n_alts, len(params)))
        for (j, p), col in cells.items():
            design[:, j, p] = col
        if cls.membership_terms:
            z, mp = self._linear_block(cls.membership_terms)
        else:
            z, mp = None, np.zeros(0, dtype=int)
        return _ClassBlock(design, np.asarray(params, dtype=int), latent_entries, z, mp)

    def _compile_latents(self):
        self.structural = []
        for lv in self.spec.latent_variables:
            for t in lv.structural_terms:
                if t.variable in self.lat_pos:
                    raise SpecificationError(f"latent {t.variable} in a structural equation")
            z, p = self._linear_block(lv.structural_terms)
            self.structural.append((z, p, self._pidx(lv.error_scale)))
        self.measures = []
        for lv_name, eq in spec_measurements(self.spec):
            col = self.data.indicator_matrix([eq.indicator])[:, 0]
            present = ~np.isnan(col)
            self.measures.append(dict(
                latent=self.lat_pos[lv_name], values=np.where(present, col, 0.0), present=present.astype(float),
                a=self._pidx(eq.intercept), b=self._pidx(eq.loading), s=self._pidx(eq.scale), name=eq.indicator,
            ))

    # -- evaluation ------------------------------------------------------

    def chunks(self) -> list[slice]:
        return [slice(i, min(i + self.chunk_size, self.n_obs)) for i in range(0, self.n_obs, self.chunk_size)]

    def evaluate(self, theta: np.ndarray, need_grad: bool = True):
        """Per-observation log-likelihood (N,) and gradients (N, K) over the
        full parameter vector (``None`` when ``need_grad`` is false)."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise DomainError(f"expected {self.n_params} parameter values, got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            bad = [self.names[i] for i in np.flatnonzero(~np.isfinite(theta))]
            raise NumericDomainError(f"non-finite parameter value(s): {', '.join(bad)}")
        for m in self.measures:
            if theta[m["s"]] == 0.0:
                raise NumericDomainError(f"measurement scale {self.names[m['s']]} is zero")
        parts = self.chunks()
        if self.workers > 1 and len(parts) > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                results = list(pool.map(lambda s: self._chunk(theta, s, need_grad), parts))
        else:
            results = [self._chunk(theta, s, need_grad) for s in parts]
        if not results:
            return np.zeros(0), (np.zeros((0, self.n_params)) if need_grad else None)
        ll = np.concatenate([r[0] for r in results])
        grad = np.concatenate([r[1] for r in results]) if need_grad else None
        return ll, grad

    def _chunk(self, theta: np.ndarray, s: slice, need_grad: bool):
        # Arrays are kept as lists of (n, R) blocks per alternative, latent
        # and class: contiguous slices are much faster than reductions over
        # a short trailing axis.
        n = s.stop - s.start
        R, J = self.n_draws, self.n_alts
        omega = [o[s] for o in self.omega_by_dim]
        onehot = self.onehot[s]

        lv = []
        for l, (z, p, sk) in enumerate(self.structural):
            lv.append((z[s] @ theta[p])[:, None] + abs(theta[sk]) * omega[l])

        log_m = np.zeros((n, R))
        resid = []
        for m in self.measures:
            sd = abs(theta[m["s"]])
            pres = m["present"][s, None]
            e = (m["values"][s, None] - theta[m["a"]]) - theta[m["b"]] * lv[m["latent"]]
            e *= pres
            log_m -= (0.5 * LOG_2PI + math.log(sd)) * pres + (0.5 / (sd * sd)) * (e * e)
            resid.append(e)

        util_c = np.zeros((n, len(self.classes)))
        for c, blk in enumerate(self.classes):
            if blk.membership is not None:
                util_c[:, c] = blk.membership[s] @ theta[blk.membership_params]
        log_pi = util_c - logsumexp(util_c, axis=1, keepdims=True)

        joint = []
        probs = []
        for c, blk in enumerate(self.classes):
            base = blk.design[s] @ theta[blk.obs_params]           # (n, J)
            v = [np.repeat(base[:, j, None], R, axis=1) for j in range(J)]
            for j, l, k in blk.latent_entries:
                v[j] += theta[k] * lv[l]
            vmax = v[0].copy()
            for j in range(1, J):
                np.maximum(vmax, v[j], out=vmax)
            ex = [np.exp(vj - vmax) for vj in v]
            den = ex[0].copy()
            for j in range(1, J):
                den += ex[j]
            v_y = np.zeros((n, R))
            for j in range(J):
                v_y += onehot[:, j, None] * v[j]
            joint.append(log_pi[:, c, None] + (v_y - vmax - np.log(den)))
            if need_grad:
                inv = 1.0 / den
                probs.append([e_j * inv for e_j in ex])

        if len(joint) == 1:
            log_s = joint[0]
        else:
            cmax = joint[0].copy()
            for jc in joint[1:]:
                np.maximum(cmax, jc, out=cmax)
            acc = np.zeros((n, R))
            for jc in joint:
                acc += np.exp(jc - cmax)
            log_s = cmax + np.log(acc)
        log_k = log_m + log_s
        kmax = log_k.max(axis=1)
        w = np.exp(log_k - kmax[:, None])
        wsum = w.sum(axis=1)
        ll = kmax + np.log(wsum) - math.log(R)
        if not np.all(np.isfinite(ll)):
            raise NumericDomainError("non-finite log-likelihood contribution")
        if not need_grad:
            return ll, None

        grad = np.zeros((n, self.n_params))
        w /= wsum[:, None]                                        # draw weights, rows sum to 1
        d_lv = [np.zeros((n, R)) for _ in range(self.n_lat)]
        for c, blk in enumerate(self.classes):
            h = np.exp(joint[c] - log_s) if len(joint) > 1 else None   # class posterior per draw
            wh = w * h if h is not None else w
            a_bar = np.empty((n, J))
            g = []
            for j in range(J):
                gj = onehot[:, j, None] - probs[c][j]
                if h is not None:
                    gj *= h
                g.append(gj)
                a_bar[:, j] = np.einsum("nr,nr->n", w, gj)
            if blk.obs_params.size:
                grad[:, blk.obs_params] += np.einsum("nj,njk->nk", a_bar, blk.design[s])
            for j, l, k in blk.latent_entries:
                grad[:, k] += np.einsum("nr,nr->n", w, g[j] * lv[l])
                d_lv[l] += theta[k] * g[j]
            if blk.membership is not None:
                h_bar = wh.sum(axis=1)
                pi_c = np.exp(log_pi[:, c])
                grad[:, blk.membership_params] += (h_bar - pi_c)[:, None] * blk.membership[s]

        for m, e in zip(self.measures, resid):
            sd = theta[m["s"]]
            s2 = sd * sd
            l = m["latent"]
            pres = m["present"][s]
            we = w * e
            grad[:, m["a"]] += we.sum(axis=1) / s2
            grad[:, m["b"]] += np.einsum("nr,nr->n", we, lv[l]) / s2
            grad[:, m["s"]] += (np.einsum("nr,nr->n", we, e) / s2 - pres) / sd
            d_lv[l] += (theta[m["b"]] / s2) * e

        for l, (z, p, sk) in enumerate(self.structural):
            wd = w * d_lv[l]
            d_bar = wd.sum(axis=1)
            if p.size:
                grad[:, p] += d_bar[:, None] * z[s]
            grad[:, sk] += np.sign(theta[sk]) * np.einsum("nr,nr->n", wd, omega[l])

        if not np.all(np.isfinite(grad)):
            bad = [self.names[k] for k in np.flatnonzero(~np.all(np.isfinite(grad), axis=0))]
            raise NumericDomainError(f"non-finite gradient for {', '.join(bad)}")
        return ll, grad


class Objective:
    """Log-likelihood over the free parameters of a spec.

    Wraps an :class:`Engine`; ``params`` supplies fixed values and the
    free/fixed layout.
    """

    def __init__(self, data: Dataset, spec: ModelSpec, draws: DrawSet | None = None, *,
                 params: ParameterVector | None = None, workers: int = 1):
        self.spec = spec
        self.params = params if params is not None else spec.parameters
        if self.params.names != spec.parameters.names:
            raise SpecificationError("parameter table does not match the spec's parameter order")
        self.engine = Engine(data, spec, draws, workers=workers)
        self.mask = self.params.free_mask
        self.free_names = self.params.free_names
        self._base = self.params.values()

    @property
    def n_free(self) -> int:
        return int(self.mask.sum())

    @property
    def n_obs(self) -> int:
        return self.engine.n_obs

    def full(self, free: np.ndarray) -> np.ndarray:
        theta = self._base.copy()
        theta[self.mask] = free
        return theta

    def value(self, free: np.ndarray) -> float:
        ll, _ = self.engine.evaluate(self.full(free), need_grad=False)
        return float(ll.sum())

    def value_and_gradient(self, free: np.ndarray) -> tuple[float, np.ndarray]:
        ll, g = self.engine.evaluate(self.full(free), need_grad=True)
        return float(ll.sum()), g[:, self.mask].sum(axis=0)

    def per_observation(self, free: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ll, g = self.engine.evaluate(self.full(free), need_grad=True)
        return ll, g[:, self.mask]

    def parameters_at(self, free: np.ndarray) -> ParameterVector:
        return self.params.with_free(free)


def _family_check(spec: ModelSpec, families: tuple[str, ...]):
    if spec.family not in families:
        raise SpecificationError(f"expected a {' or '.join(families)} spec, got {spec.family}")


def _loglik(data, spec, params, draws) -> LikelihoodValue:
    if params.names != spec.parameters.names:
        raise SpecificationError("parameter table does not match the spec's parameter order")
    engine = Engine(data, spec, draws)
    ll, _ = engine.evaluate(params.values(), need_grad=False)
    return LikelihoodValue(float(ll.sum()), ll)


def mnl_loglik(data: Dataset, spec: ModelSpec, params: ParameterVector) -> LikelihoodValue:
    _family_check(spec, ("MNL",))
    return _loglik(data, spec, params, None)


def lc_loglik(data: Dataset, spec: ModelSpec, params: ParameterVector) -> LikelihoodValue:
    _family_check(spec, ("LC",))
    return _loglik(data, spec, params, None)


def iclv_simulated_loglik(data: Dataset, spec: ModelSpec, params: ParameterVector, draws: DrawSet) -> LikelihoodValue:
    _family_check(spec, ("ICLV",))
    return _loglik(data, spec, params, draws)


def lc_iclv_simulated_loglik(data: Dataset, spec: ModelSpec, params: ParameterVector,
                             draws: DrawSet) -> LikelihoodValue:
    _family_check(spec, ("LC_ICLV",))
    return _loglik(data, spec, params, draws)


def loglik(data: Dataset, spec: ModelSpec, params: ParameterVector | None = None,
           draws: DrawSet | None = None) -> LikelihoodValue:
    """Dispatch on the spec's family."""
    return _loglik(data, spec, params if params is not None else spec.parameters, draws)


def gradient(data: Dataset, spec: ModelSpec, params: ParameterVector | None = None,
             draws: DrawSet | None = None) -> np.ndarray:
    """Analytic gradient of the total log-likelihood over the free parameters."""
    params = params if params is not None else spec.parameters
    obj = Objective(data, spec, draws, params=params)
    return obj.value_and_gradient(params.free_values())[1]


def gaussian_measurement_constant(data: Dataset, spec: ModelSpec, params: ParameterVector) -> float:
    """Total measurement log-density when every measurement loading is zero,
    so indicators do not depend on the latent variables."""
    total = 0.0
    for _, eq in spec_measurements(spec):
        col = data.indicator_matrix([eq.indicator])[:, 0]
        col = col[~np.isnan(col)]
        sd = abs(params.value(eq.scale))
        e = col - params.value(eq.intercept)
        total += float(np.sum(-0.5 * LOG_2PI - math.log(sd) - 0.5 * (e / sd) ** 2))
    return total
