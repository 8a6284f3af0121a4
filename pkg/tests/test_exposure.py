import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

import vqexposure.exposure as ex
from vqexposure.exposure import (
    DJS,
    PDS,
    ConfigurationError,
    ExposureTask,
    NotApplicableError,
    ee_analytic,
    ee_mc,
    ee_numerical,
    ee_quantized_djs,
    ee_quantized_pds,
    ee_quantized_tree,
    ee_sobol,
    error_metrics,
    make_profile,
    pfe,
)
from vqexposure.gaussnum import normal_quantile
from vqexposure.market import BucketGrid, MarketParams, OptionSpec, bs_price, netting10, standard_buckets
from vqexposure.quantizer import build_grid, product_grid, tree_transitions
from vqexposure.sampling import NormalStream

CALL = OptionSpec("call", 100.0, 1.0)
PUT = OptionSpec("put", 100.0, 1.0)


def task(target=CALL, spot=100.0, vol=0.25, **kw):
    return ExposureTask(target, MarketParams(spot, 0.03, vol), kw.pop("buckets", standard_buckets()), **kw)


def quad_ee(t: ExposureTask, time: float) -> float:
    """E[(MtM - V)^+] at one date by adaptive quadrature over z."""
    f = lambda z: float(t.exposure(time, z)) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    return integrate.quad(f, -12, 12, epsabs=1e-12, epsrel=1e-11, limit=400, points=[-2, 0, 2])[0]


# ---------------------------------------------------------------------------
# analytic benchmark


@pytest.mark.parametrize("target", [CALL, PUT])
@pytest.mark.parametrize("time", [1 / 52, 0.5, 0.9])
def test_analytic_equals_quadrature(target, time):
    t = task(target, buckets=BucketGrid((time,)))
    assert ee_analytic(t).ee[0] == pytest.approx(quad_ee(t, time), rel=1e-9)


def test_analytic_growth_and_discounting():
    t = task()
    mtm0 = bs_price("call", 100.0, 100.0, 0.03, 0.25, 1.0)
    np.testing.assert_allclose(ee_analytic(t).ee, mtm0 * np.exp(0.03 * np.array(t.buckets.times)), rtol=1e-15)
    np.testing.assert_allclose(ee_analytic(task(discount=True)).ee, mtm0, rtol=1e-14)


def test_analytic_not_applicable():
    with pytest.raises(NotApplicableError):
        ee_analytic(task(tuple(netting10())))
    with pytest.raises(NotApplicableError):
        ee_analytic(task(collateral=1.0))
    assert np.all(ee_analytic(task(OptionSpec("call", 100.0, 1.0, "sell"))).ee == 0.0)


# ---------------------------------------------------------------------------
# profiles and PFE


@given(st.lists(st.floats(min_value=0, max_value=1e3), min_size=9, max_size=9))
def test_profile_derived_quantities(values):
    b = standard_buckets()
    p = make_profile(b, values, "x")
    assert p.epe == pytest.approx(np.dot(values, b.deltas) / b.horizon, rel=1e-12, abs=1e-12)
    assert np.all(np.diff(p.eee) >= 0)
    assert np.all(p.eee >= p.ee)
    assert p.eepe >= p.epe - 1e-9


def test_profile_rejects_bad_input():
    b = standard_buckets()
    with pytest.raises(ConfigurationError):
        make_profile(b, np.ones(3), "x")
    with pytest.raises(ValueError):
        make_profile(b, -np.ones(9), "x")


def test_pfe_unweighted_order_statistic():
    v = np.arange(1.0, 101.0)
    rng = np.random.default_rng(0)
    rng.shuffle(v)
    assert pfe(v, 0.95) == 95.0
    assert pfe(v, 0.951) == 96.0
    assert pfe(v, 0.001) == 1.0
    np.testing.assert_array_equal(pfe(np.column_stack([v, 2 * v]), 0.5), [50.0, 100.0])


def test_pfe_weighted_left_continuous():
    v = np.array([2.0, 0.0, 1.0])
    w = np.array([0.2, 0.5, 0.3])
    assert pfe(v, 0.5, w) == 0.0
    assert pfe(v, 0.8, w) == 1.0
    assert pfe(v, 0.81, w) == 2.0
    for alpha in (0.0, 1.0, 1.2):
        with pytest.raises(ValueError):
            pfe(v, alpha, w)


def test_quantized_pfe_matches_lognormal_quantile(grid_cache):
    # a bought call's exposure is increasing in z, so its PFE is the price at the z-quantile
    t = task()
    prof = ee_quantized_djs(t, grid_cache(1000), pfe_alphas=(0.95,))
    for k, time in enumerate(t.buckets.times):
        exact = bs_price("call", 100.0 * math.exp((0.03 - 0.5 * 0.0625) * time + 0.25 * math.sqrt(time) * 1.6448536269514722),
                         100.0, 0.03, 0.25, 1.0 - time)
        assert prof.pfe[0.95][k] == pytest.approx(exact, rel=5e-3)


def test_mc_pfe_matches_lognormal_quantile():
    # the sample quantile's level is off by O(sqrt(a (1 - a) / n)); bracket it at 4 of those
    n, alpha = 200_000, 0.99
    t = task(buckets=BucketGrid((0.5,)))
    prof = ee_mc(t, n, stream=NormalStream.pseudo(99, 1), pfe_alphas=(alpha,))
    delta = 4 * math.sqrt(alpha * (1 - alpha) / n)

    def price_at_level(level):
        z = normal_quantile(level)
        return bs_price("call", 100.0 * math.exp((0.03 - 0.03125) * 0.5 + 0.25 * math.sqrt(0.5) * z), 100.0, 0.03, 0.25, 0.5)

    assert price_at_level(alpha - delta) <= prof.pfe[alpha][0] <= price_at_level(alpha + delta)


# ---------------------------------------------------------------------------
# quantization


@settings(max_examples=25, deadline=None)
@given(
    st.floats(min_value=70, max_value=130),
    st.floats(min_value=0.1, max_value=0.5),
    st.sampled_from([5, 20, 100]),
)
def test_quantization_underestimates_call_exposure(spot, vol, n):
    # a call price is convex and increasing in S, and S is convex in z, so the
    # exposure is convex in z. A put is not (spot=70, vol=25%, N=5 overshoots).
    t = task(CALL, spot, vol)
    q = ee_quantized_djs(t, build_grid(n))
    a = ee_analytic(t)
    assert np.all(q.ee <= a.ee + 1e-9)


def test_quantization_error_shrinks_with_n(grid_cache):
    t = task(PUT, 95.0, 0.3)
    a = ee_analytic(t).epe
    errs = [abs(ee_quantized_djs(t, grid_cache(n)).epe - a) for n in (10, 40, 160)]
    assert errs[0] > errs[1] > errs[2]


def test_per_bucket_grid_list(grid_cache):
    t = task()
    same = ee_quantized_djs(t, [grid_cache(50)] * 9)
    np.testing.assert_array_equal(same.ee, ee_quantized_djs(t, grid_cache(50)).ee)
    with pytest.raises(ConfigurationError):
        ee_quantized_djs(t, [grid_cache(50)] * 3)


def test_tree_matches_direct_jump(grid_cache):
    t = task(tuple(netting10()), 100.0, 0.25)
    g = grid_cache(100)
    tms = tree_transitions([g] * 9, t.buckets.times)
    tree = ee_quantized_tree(t, g, transitions=tms)
    djs = ee_quantized_djs(t, g)
    np.testing.assert_allclose(tree.ee, djs.ee, rtol=1e-4)
    assert tree.method == "quantization-tree"


def test_pruned_tree_regression_bound(grid_cache):
    # cutting jumps beyond 3 sd drops ~2.7% of each increment's variance, so
    # the propagated marginals narrow and the EPE falls; frozen at 2.5%
    t = task(tuple(netting10()), 100.0, 0.25)
    g = grid_cache(100)
    djs = ee_quantized_djs(t, g)
    pruned = ee_quantized_tree(t, g, prune_z=3.0)
    assert pruned.ee[0] == pytest.approx(djs.ee[0], rel=1e-12)
    assert np.all(pruned.ee <= djs.ee * (1 + 1e-9))
    assert abs(pruned.epe / djs.epe - 1) < 0.025
    # a 4 sd cut keeps the bias under 0.1%
    assert abs(ee_quantized_tree(t, g, prune_z=4.0).epe / djs.epe - 1) < 1e-3


def test_tree_rejects_wrong_transition_count(grid_cache):
    t = task()
    g = grid_cache(10)
    tms = tree_transitions([g] * 9, t.buckets.times)
    with pytest.raises(ConfigurationError):
        ee_quantized_tree(t, g, transitions=tms[:-1])


def test_pathwise_quantization_close_to_direct_jump():
    b = BucketGrid((0.25, 0.5, 1.0))
    t = task(tuple(netting10()), 100.0, 0.25, buckets=b)
    pts, w = product_grid([build_grid(30)] * 3)
    pds = ee_quantized_pds(t, pts, w)
    djs = ee_quantized_djs(t, build_grid(1000))
    np.testing.assert_allclose(pds.ee, djs.ee, rtol=5e-3)
    with pytest.raises(ConfigurationError):
        ee_quantized_pds(t, pts[:, :2], w)


# ---------------------------------------------------------------------------
# simulation


def test_mc_modes_agree_and_carry_stderr():
    t = task(tuple(netting10()), 100.0, 0.25)
    a = ee_mc(t, 40_000, PDS, NormalStream.pseudo(1, 9))
    b = ee_mc(t, 40_000, DJS, NormalStream.pseudo(2, 9))
    assert np.all(a.stderr > 0) and a.epe_stderr > 0
    z = np.abs(a.ee - b.ee) / np.hypot(a.stderr, b.stderr)
    assert np.all(z < 4)


def test_mc_is_deterministic_and_chunk_invariant(monkeypatch):
    t = task(PUT)
    a = ee_mc(t, 5000, stream=NormalStream.pseudo(3, 9))
    b = ee_mc(t, 5000, stream=NormalStream.pseudo(3, 9))
    np.testing.assert_array_equal(a.ee, b.ee)
    monkeypatch.setattr(ex, "CHUNK", 777)
    c = ee_mc(t, 5000, stream=NormalStream.pseudo(3, 9))
    np.testing.assert_allclose(c.ee, a.ee, rtol=1e-13)
    np.testing.assert_allclose(c.stderr, a.stderr, rtol=1e-9)


def test_mc_pinned_seed_within_three_stderr():
    t = task(PUT, 90.0, 0.3)
    prof = ee_mc(t, 100_000)
    a = ee_analytic(t)
    assert np.all(np.abs(prof.ee - a.ee) < 3 * prof.stderr)


def test_mc_argument_checks():
    with pytest.raises(ValueError):
        ee_mc(task(), 1)
    with pytest.raises(ConfigurationError):
        ee_mc(task(), 10, stream=NormalStream.pseudo(1, 3))
    with pytest.raises(ConfigurationError):
        ee_mc(task(), 10, mode="bridge")


def test_sobol_converges_and_is_deterministic():
    t = task()
    a = ee_analytic(t)
    s = ee_sobol(t, 2**15)
    assert abs(error_metrics(s, a).epe_eps) < 0.05
    np.testing.assert_array_equal(s.ee, ee_sobol(t, 2**15).ee)
    assert s.stderr is None
    assert ee_sobol(t, 1000, sample_stderr=True).stderr.shape == (9,)


def test_numerical_truncation_free_with_wide_range():
    t = task(CALL, 110.0, 0.15)
    m = error_metrics(ee_numerical(t, 100_000, z_max=8.0), ee_analytic(t))
    assert np.all(np.abs(m.eps) < 1e-6)


def test_numerical_default_range_reproduces_reference_column():
    reference = [11.3542, 11.3606, 11.3670, 11.3735, 11.4036, 11.4317, 11.5165, 11.6020, 11.6879]
    t = task(CALL, 100.0, 0.25)
    prof = ee_numerical(t)
    np.testing.assert_allclose(prof.ee, reference, atol=3e-4)
    assert prof.epe == pytest.approx(11.5518, abs=1e-4)


# ---------------------------------------------------------------------------
# netting, collateral, discounting


@pytest.mark.parametrize("collateral", [0.5, 3.0])
def test_collateral_matches_quadrature(collateral, grid_cache):
    t = task(tuple(netting10()), 100.0, 0.3, collateral=collateral)
    q = ee_quantized_djs(t, grid_cache(1000))
    for k in (0, 5, 8):
        assert q.ee[k] == pytest.approx(quad_ee(t, t.buckets.times[k]), rel=1e-4, abs=1e-7)
    assert np.all(q.ee <= ee_quantized_djs(task(tuple(netting10()), 100.0, 0.3), grid_cache(1000)).ee)


def test_netting_never_exceeds_sum_of_standalone_exposures(grid_cache):
    pf = netting10()
    g = grid_cache(200)
    net = ee_quantized_djs(task(tuple(pf)), g).ee
    gross = sum(ee_quantized_djs(task(o), g).ee for o in pf)
    assert np.all(net <= gross + 1e-12)


def test_discounting_scales_every_estimator(grid_cache):
    plain, disc = task(PUT), task(PUT, discount=True)
    f = np.exp(-0.03 * np.array(plain.buckets.times))
    np.testing.assert_allclose(ee_quantized_djs(disc, grid_cache(50)).ee, ee_quantized_djs(plain, grid_cache(50)).ee * f)
    np.testing.assert_allclose(ee_sobol(disc, 512).ee, ee_sobol(plain, 512).ee * f)
    np.testing.assert_allclose(ee_mc(disc, 512).ee, ee_mc(plain, 512).ee * f)


# ---------------------------------------------------------------------------
# error metrics


def test_error_metrics_zero_benchmark_is_nan():
    b = BucketGrid((0.5, 1.0))
    bench = make_profile(b, [0.0, 2.0], "bench")
    est = make_profile(b, [0.1, 2.2], "est", stderr=[0.01, 0.1], epe_stderr=0.05)
    m = error_metrics(est, bench)
    assert math.isnan(m.eps[0])
    assert m.eps[1] == pytest.approx(10.0)
    assert m.undefined.tolist() == [True, False]
    assert m.rsd[1] == pytest.approx(100 * 0.1 / 2.2)
    assert m.epe_rsd == pytest.approx(100 * 0.05 / est.epe)
    with pytest.raises(ConfigurationError):
        error_metrics(est, make_profile(BucketGrid((0.4, 1.0)), [1.0, 1.0], "x"))


def test_error_metrics_without_stderr():
    t = task()
    m = error_metrics(ee_analytic(t), ee_analytic(t))
    assert m.rsd is None and m.epe_rsd is None
    assert np.all(m.eps == 0.0)


def test_portfolio_matches_reference_benchmark(grid_cache):
    from conftest import CASES
    from reference_values import PORTFOLIO_BENCHMARK_EPE

    g = grid_cache(1000)
    for spot, vol in CASES:
        q = ee_quantized_djs(task(tuple(netting10()), spot, vol), g)
        assert q.epe == pytest.approx(float(PORTFOLIO_BENCHMARK_EPE[(spot, vol)]), rel=5e-4)
