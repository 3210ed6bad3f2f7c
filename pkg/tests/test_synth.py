import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal, pearsonr

from hybridchoice.dataset import Dataset, Observation, load_csv, write_csv
from hybridchoice.errors import DomainError, UnsupportedDimensionError
from hybridchoice.likelihood import (
    halton_draws, iclv_simulated_loglik, mnl_probabilities, systematic_utility,
)
from hybridchoice.modelspec import (
    CONSTANT, LatentVariableSpec, MeasurementEq, ModelSpec, Parameter, ParameterVector, UtilityTerm,
    paper_estimates, paper_presets,
)
from hybridchoice.synth import (
    PAPER_GROUPS, GeneratorConfig, coverage, gauss_hermite, generate, generate_with_report,
    quadrature_loglik, recovered, recovery_study,
)

from toys import toy_data, toy_iclv, toy_lc_iclv

PRESETS = paper_presets()


def _zero_truth(spec):
    return spec.parameters.with_values({n: 0.0 for n in spec.parameters.names})


def _binomial_band(count, n, p, z):
    return abs(count - n * p) <= z * math.sqrt(n * p * (1 - p))


def test_choice_shares_match_exact_probabilities_n72():
    spec, truth = PRESETS["MNL"], paper_estimates("MNL")
    data = generate(GeneratorConfig(72, spec, truth, seed=1))
    exact = np.mean([mnl_probabilities([systematic_utility(o, spec.utilities[a], truth) for a in (1, 2, 3)])
                     for o in data], axis=0)
    counts = np.bincount(data.choice_positions(), minlength=3)
    for a in range(3):
        assert _binomial_band(counts[a], 72, exact[a], 1.96)


def test_zero_truth_gives_uniform_shares():
    spec = PRESETS["MNL"]
    n = 100_000
    data = generate(GeneratorConfig(n, spec, _zero_truth(spec), seed=2))
    counts = np.bincount(data.choice_positions(), minlength=3)
    for c in counts:
        assert _binomial_band(c, n, 1 / 3, 3.0)


def test_covariate_marginals():
    spec = PRESETS["MNL"]
    n = 20_000
    data = generate(GeneratorConfig(n, spec, paper_estimates("MNL"), seed=3))
    for dummies in PAPER_GROUPS.values():
        for name, p in dummies.items():
            assert _binomial_band(data.column(name).sum(), n, p, 3.0)
        # exclusive groups never switch on two dummies at once
        total = sum(data.column(name) for name in dummies)
        assert total.max() <= 1


def test_zero_loadings_decouple_indicators():
    spec = PRESETS["ICLV"]
    truth = paper_estimates("ICLV")
    loadings = {eq.loading: 0.0 for lv in spec.latent_variables for eq in lv.measurements}
    data = generate(GeneratorConfig(10_000, spec, truth.with_values(loadings), seed=4, likert=False))
    for ind in spec.indicator_names:
        x = data.column(ind)
        for cov in ("Male", "Young", "LowIncome", "Car"):
            assert abs(pearsonr(x, data.column(cov))[0]) < 0.05


def test_generation_deterministic_and_reports_clamping():
    cfg = GeneratorConfig(300, PRESETS["ICLV"], paper_estimates("ICLV"), seed=5)
    a, b = generate_with_report(cfg), generate_with_report(cfg)
    assert a.dataset.observations == b.dataset.observations
    assert 0.0 <= a.clamped_share <= 1.0
    values = a.dataset.indicator_matrix(PRESETS["ICLV"].indicator_names)
    assert set(np.unique(values)) <= {1.0, 2.0, 3.0, 4.0, 5.0}
    cont = generate_with_report(GeneratorConfig(300, PRESETS["ICLV"], paper_estimates("ICLV"), seed=5, likert=False))
    assert cont.clamped_share == 0.0


def test_generated_csv_round_trip(tmp_path):
    data = generate(GeneratorConfig(50, PRESETS["LC_ICLV"], paper_estimates("LC_ICLV"), seed=6))
    path = tmp_path / "synthetic.csv"
    write_csv(data, path)
    back = load_csv(path, data.variables)
    assert back.observations == data.observations


def test_config_validation():
    spec = PRESETS["MNL"]
    truth = paper_estimates("MNL")
    with pytest.raises(DomainError):
        GeneratorConfig(-1, spec, truth)
    with pytest.raises(DomainError):
        GeneratorConfig(10, spec, truth, groups={"g": {"Male": 1.2}})
    with pytest.raises(DomainError):
        GeneratorConfig(10, spec, truth, groups={"g": {"Young": 0.6, "MiddleAge": 0.6}})
    with pytest.raises(DomainError):
        generate(GeneratorConfig(10, spec, truth, groups={"g": {"Male": 0.5}}))


# --------------------------------------------------------------------------
# quadrature oracle
# --------------------------------------------------------------------------

def test_gauss_hermite_moments():
    x, w = gauss_hermite(32)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert x @ w == pytest.approx(0.0, abs=1e-14)
    assert (x ** 2) @ w == pytest.approx(1.0, abs=1e-13)
    assert (x ** 4) @ w == pytest.approx(3.0, abs=1e-12)
    with pytest.raises(DomainError):
        gauss_hermite(65)


def _gaussian_only():
    eqs = tuple(MeasurementEq(f"M{k}", f"A{k}", f"B{k}", f"S{k}") for k in range(3))
    lv = LatentVariableSpec("L", (UtilityTerm("MU", CONSTANT),), "SIG", eqs)
    values = {"MU": 0.7, "SIG": 0.8, "A0": 0.2, "B0": 1.0, "S0": 1.2, "A1": -0.4, "B1": 0.6, "S1": 1.4,
              "A2": 1.1, "B2": -0.5, "S2": 1.0}
    params = ParameterVector([Parameter(k, v) for k, v in values.items()])
    return ModelSpec("ICLV", params, utilities={1: (), 2: (), 3: ()}, latent_variables=(lv,), name="gauss")


def test_quadrature_matches_gaussian_convolution():
    spec = _gaussian_only()
    p = spec.parameters
    rng = np.random.default_rng(0)
    obs = tuple(Observation(f"g{i}", int(rng.integers(1, 4)), {},
                            {f"M{k}": float(rng.normal(1, 1.5)) for k in range(3)}) for i in range(8))
    data = Dataset(obs, {f"M{k}": "indicator" for k in range(3)})
    a = np.array([p.value(f"A{k}") for k in range(3)])
    b = np.array([p.value(f"B{k}") for k in range(3)])
    s = np.array([p.value(f"S{k}") for k in range(3)])
    mean = a + b * p.value("MU")
    cov = p.value("SIG") ** 2 * np.outer(b, b) + np.diag(s ** 2)
    expected = [multivariate_normal.logpdf([o.indicators[f"M{k}"] for k in range(3)], mean, cov) + math.log(1 / 3)
                for o in data]
    got = quadrature_loglik(data, spec, nodes=32).per_observation
    np.testing.assert_allclose(got, expected, atol=1e-8, rtol=0)


def test_quadrature_constant_integrand():
    spec = toy_iclv()
    params = spec.parameters.with_values({"B_L1": 0.0, "B_L2": 0.0})
    data = toy_data(4, missing=False)
    # without indicators the measurement part vanishes and the choice
    # probability no longer depends on the latent values
    bare = Dataset(tuple(Observation(o.id, o.choice, o.covariates) for o in data), {"x1": "continuous", "x2": "binary"})
    got = quadrature_loglik(bare, spec, params, nodes=5).per_observation
    lv = {"LV1": 0.0, "LV2": 0.0}
    exact = [math.log(mnl_probabilities([systematic_utility(o, spec.utilities[a], params, lv) for a in (1, 2, 3)])[o.choice - 1])
             for o in bare]
    np.testing.assert_allclose(got, exact, atol=1e-13)


def test_quadrature_agrees_with_simulation_lc_iclv():
    spec, data = toy_lc_iclv(), toy_data(5)
    draws = halton_draws(len(data), 4000, 2, seed=1)
    from hybridchoice.likelihood import lc_iclv_simulated_loglik
    sim = lc_iclv_simulated_loglik(data, spec, spec.parameters, draws).total
    quad = quadrature_loglik(data, spec, nodes=32).total
    assert sim == pytest.approx(quad, rel=1e-3)


def test_quadrature_rejects_three_latents():
    spec = toy_iclv()
    lv3 = LatentVariableSpec("LV3", (UtilityTerm("A1_CONS", CONSTANT),), "S1", ())
    three = ModelSpec("ICLV", spec.parameters, utilities=spec.utilities,
                      latent_variables=spec.latent_variables + (lv3,))
    with pytest.raises(UnsupportedDimensionError):
        quadrature_loglik(toy_data(2), three)


# --------------------------------------------------------------------------
# recovery helpers
# --------------------------------------------------------------------------

def test_recovered_rule():
    assert recovered(1.0, 1.2, 0.1)
    assert not recovered(1.0, 1.4, 0.1)
    assert recovered(35.1, 7.0, math.nan)
    assert not recovered(35.1, 4.0, 1.0)
    assert not recovered(-12.0, 12.0, 1.0)
    assert not recovered(1.0, 1.0, math.nan)


def test_small_recovery_study():
    spec, truth = PRESETS["MNL"], paper_estimates("MNL")
    reps = recovery_study(spec, truth, n=2000, reps=2, seed=3)
    assert [r.seed for r in reps] == [3, 4]
    assert all(r.converged for r in reps)
    cov = coverage(reps)
    assert set(cov) == set(spec.parameters.free_names)
    assert all(0.0 <= v <= 1.0 for v in cov.values())
