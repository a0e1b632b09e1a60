import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from thermcorr import cavity
from thermcorr.cavity import (
    CavityParams,
    MomentTable,
    build_moment_table,
    cavity_correlators,
    cavity_strong_limits,
    estimate_moments,
    log_grid,
    reflection_batch,
    sample_cavity_reflection,
)
from thermcorr.core import DetectorPair, UnitSystem

# gamma = 1 moments at N = 30 from 20000 realisations (seed 12345), frozen
# as regression anchors.
ANCHOR_ABSORB = 0.4956264548362875
ANCHOR_SE_ABSORB = 7.203724543324776e-05
ANCHOR_VAR = 0.06241975754539575
ANCHOR_SE_VAR = 2.3040484069505423e-05


def _svals(r):
    return np.linalg.svd(r, compute_uv=False)


# ---- params


def test_params_validation():
    assert CavityParams(4, 1.0).M_res == 40
    for kw in (dict(N=0, gamma0=1.0), dict(N=2, gamma0=-1.0), dict(N=2, gamma0=1.0, resonance_factor=4)):
        with pytest.raises(ValueError):
            CavityParams(**kw)


# ---- sampler


@pytest.mark.parametrize("wide_band", [True, False])
def test_lossless_is_unitary_and_reciprocal(wide_band):
    s = sample_cavity_reflection(6, 0.0, seed=1, wide_band=wide_band)
    r = s.r
    assert np.max(np.abs(r @ r.conj().T - np.eye(6))) < 1e-10
    assert s.reciprocal
    assert s.reciprocity_error() < 1e-10


def test_strong_absorption_reflects_little():
    r = sample_cavity_reflection(4, 1e4, seed=2).r
    assert np.all(_svals(r) ** 2 < 1e-2)


def test_direct_construction_leaves_band_at_strong_absorption():
    # With M_res = 10 N levels the absorption width at gamma = 1e4 is far
    # wider than the band, so the finite resolvent reflects almost
    # everything again.  This is why the completed K-matrix form is the default.
    r = sample_cavity_reflection(4, 1e4, seed=2, wide_band=False).r
    assert np.all(_svals(r) ** 2 > 0.5)


def test_gue_is_not_reciprocal():
    s = sample_cavity_reflection(5, 0.5, seed=3, ensemble="gue")
    assert not s.reciprocal
    assert s.reciprocity_error() > 1e-3
    assert np.max(_svals(s.r)) <= 1 + 1e-10


def test_sampler_rejects_bad_input():
    with pytest.raises(ValueError):
        reflection_batch(4, [1.0], 2, M_res=10)
    with pytest.raises(ValueError):
        reflection_batch(4, [-1.0], 2)
    with pytest.raises(ValueError):
        reflection_batch(4, [1.0], 2, ensemble="gse")


def test_seed_determinism_bit_identical():
    a = reflection_batch(5, [0.3, 3.0], 7, seed=11)
    b = reflection_batch(5, [0.3, 3.0], 7, seed=11)
    assert np.array_equal(a, b)
    c = reflection_batch(5, [0.3, 3.0], 7, seed=12)
    assert not np.array_equal(a, c)


def test_realisations_independent_of_sample_count_and_grid():
    long = reflection_batch(4, [0.5, 2.0], 60, seed=5)
    short = reflection_batch(4, [2.0], 55, seed=5)
    # same realisations; only the batched linear algebra differs in rounding
    np.testing.assert_allclose(long[:55, 1], short[:, 0], rtol=0, atol=1e-12)
    tail = reflection_batch(4, [0.5, 2.0], 10, seed=5, first=50)
    np.testing.assert_allclose(tail, long[50:], rtol=0, atol=1e-12)


def test_moments_seed_determinism():
    a = estimate_moments(6, [0.1, 1.0], 100, seed=4)
    b = estimate_moments(6, [0.1, 1.0], 100, seed=4)
    assert np.array_equal(a.mean_sigma, b.mean_sigma)
    assert np.array_equal(a.mean_sigma_sq, b.mean_sigma_sq)


def test_parallel_workers_identical():
    a1, a2 = cavity.absorption_samples(4, [0.5], 120, seed=9)
    b1, b2 = cavity.absorption_samples(4, [0.5], 120, seed=9, workers=2)
    assert np.array_equal(a1, b1) and np.array_equal(a2, b2)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 8), st.floats(0.0, 1e4), st.integers(0, 2**32 - 1),
       st.sampled_from(["goe", "gue"]), st.booleans())
def test_subunitary_property(N, gamma, seed, ensemble, wide_band):
    r = reflection_batch(N, [gamma], 3, seed, ensemble=ensemble, wide_band=wide_band)[:, 0]
    assert np.all(_svals(r) <= 1 + 1e-10)
    q = np.eye(N) - r @ np.conj(np.swapaxes(r, -1, -2))
    a1 = np.trace(q, axis1=-2, axis2=-1).real / N
    a2 = np.einsum("sij,sij->s", q, q.conj()).real / N
    # <sigma^2> <= <sigma> per sample
    assert np.all((1 - 2 * a1 + a2) <= (1 - a1) + 1e-12)


# ---- moments


def test_estimate_requires_samples():
    with pytest.raises(ValueError):
        estimate_moments(4, 1.0, 50)


def test_lossless_moments_exact():
    m = estimate_moments(5, 0.0, 100, seed=0)
    assert m.mean_sigma == pytest.approx(1.0, abs=1e-12)
    assert m.mean_sigma_sq == pytest.approx(1.0, abs=1e-12)
    assert m.var == pytest.approx(0.0, abs=1e-12)


def test_insufficient_sampling_flag():
    m = estimate_moments(4, 1.0, 100, seed=0, tolerance=1e-6)
    assert "insufficient-sampling" in m.flags
    assert estimate_moments(4, 1.0, 100, seed=0, tolerance=1.0).flags == ()


def test_richardson_reduces_to_linear_extrapolation():
    v, e = cavity._richardson(30, 1.1, 0.1, 60, 1.05, 0.1)
    assert v == pytest.approx(1.0)
    assert e == pytest.approx(math.hypot(6.0, 3.0) / 30)


@pytest.mark.slow
def test_gamma_one_anchor():
    # Anchors frozen from the 20000-sample run; 300 samples must agree at 4 sigma.
    m = estimate_moments(30, 1.0, 300, seed=1)
    assert abs(m.absorptance - ANCHOR_ABSORB) < 4 * math.hypot(m.se_mean, ANCHOR_SE_ABSORB)
    assert abs(m.var - ANCHOR_VAR) < 4 * math.hypot(m.var_error, ANCHOR_SE_VAR)


def test_weak_absorption_trend_small_table():
    t = build_moment_table([8, 16], [0.0, 0.02, 0.05, 0.1], 200, seed=2)
    p = t.primary
    assert p.absorb[0] == 0.0 and p.var[0] == 0.0
    np.testing.assert_allclose(p.absorb[1:], p.gamma[1:] / (1 + p.gamma[1:]), rtol=0.05)
    assert t.diagnostics["grid_covers_default"] is False
    assert all(d["mean_sigma_strictly_decreasing"] for d in t.diagnostics["rows"])


def test_ensembles_agree():
    g = [1.0, 100.0]
    a = estimate_moments(16, g, 300, seed=3, ensemble="goe")
    b = estimate_moments(16, g, 300, seed=3, ensemble="gue")
    # 3 sigma plus an O(1/N) allowance of 3/N relative; the measured gap in
    # the variance at gamma = 100 is about 2/N
    tol_a = 3 * np.hypot(a.se_mean, b.se_mean) + 3 * a.absorptance / 16
    assert np.all(np.abs(a.absorptance - b.absorptance) < tol_a)
    tol_v = 3 * np.hypot(a.var_error, b.var_error) + 3 * a.var / 16
    assert np.all(np.abs(a.var - b.var) < tol_v)


# ---- table


@pytest.fixture(scope="module")
def small_table():
    return build_moment_table([6, 12], log_grid(1e-2, 1e2, 2), 150, seed=7)


def test_table_roundtrip(small_table, tmp_path):
    path = tmp_path / "t.csv"
    text = small_table.to_csv(str(path))
    lines = text.splitlines()
    assert lines[0].startswith("# config:")
    assert lines[1] == "# seed: 7"
    assert "gamma,mean_sigma,mean_sigma_sq,se_mean,se_sq,N,samples" in lines
    back = MomentTable.from_csv(str(path))
    assert back.seed == 7
    assert [str(n) for n in back.N_values] == ["6.0", "12.0", "inf"]
    np.testing.assert_allclose(back.primary.absorb, small_table.primary.absorb, rtol=1e-9, atol=1e-13)
    np.testing.assert_allclose(back.primary.var, small_table.primary.var, rtol=1e-6)
    assert MomentTable.from_csv(text).config == back.config


def test_table_rejects_bad_csv():
    with pytest.raises(ValueError):
        MomentTable.from_csv("a,b\n1,2\n")
    with pytest.raises(ValueError):
        MomentTable.from_csv("# version: 99\ngamma,mean_sigma,mean_sigma_sq,se_mean,se_sq,N,samples\n")


def test_zero_grid_table_is_exact():
    t = build_moment_table([5], [0.0], 100)
    assert t.primary.absorb[0] == pytest.approx(0.0, abs=1e-13)
    assert t.primary.mean_sigma_sq[0] == pytest.approx(1.0, abs=1e-12)


def test_interpolator_ranges(small_table):
    f = small_table.interpolator()
    a, v = f(np.array([1e-5, 1e-2, 1.0]))
    assert a[0] == pytest.approx(1e-5, rel=1e-15) and v[0] == pytest.approx(1e-10, rel=1e-15)
    assert a[1] == pytest.approx(small_table.primary.absorb[0])
    with pytest.raises(ValueError):
        f(1e3)


def test_cavity_correlators_against_quadpack(small_table):
    # The same interpolated moments integrated by an independent quadrature.
    f = small_table.interpolator()
    absorb = lambda g: float(f(g)[0])  # noqa: E731
    var = lambda g: float(f(g)[1])  # noqa: E731
    r = cavity_correlators(CavityParams(12, 50.0), None, small_table)
    ref = oracles.cavity_line_integrals_quadpack(absorb, var, 50.0)
    assert (r.cross, r.current, r.short_range) == pytest.approx(ref, rel=1e-6)
    assert r.units is UnitSystem.CAVITY_FIG3


def test_cavity_correlators_errors_and_flags(small_table):
    assert cavity_correlators(CavityParams(6, 0.0), None, small_table).current == 0.0
    with pytest.raises(ValueError):
        cavity_correlators(CavityParams(6, 1e3), None, small_table)
    r = cavity_correlators(CavityParams(6, 10.0), None, small_table)
    assert "table-below-coverage" in r.flags


def test_strong_limits():
    assert cavity_strong_limits(DetectorPair(1, 1, 1), 1) == {"cross_ratio_limit": 0.062,
                                                            "short_range_ratio_limit": 0.5}
    lim = cavity_strong_limits(DetectorPair(0.5, 0.5, 2.0), 10)
    assert lim["cross_ratio_limit"] == pytest.approx(0.0062)
    assert lim["short_range_ratio_limit"] == pytest.approx(0.5)
    assert cavity_strong_limits(DetectorPair(0.0, 0.0, 1.0), 3) == {"cross_ratio_limit": 0.0,
                                                                  "short_range_ratio_limit": 0.0}


# ---- default table (shared fixture, minutes to build once)


@pytest.mark.slow
def test_default_table_monotone(default_table):
    assert default_table.diagnostics["grid_covers_default"]
    for row in default_table.rows:
        assert np.all(np.diff(row.absorb) > 0)
    m = default_table.moments()
    assert m.violations() == []


@pytest.mark.slow
def test_default_table_weak_absorption_anchors(default_table):
    a, v = default_table.interpolator()(0.02)
    assert float(a) / 0.02 == pytest.approx(1.0, rel=0.03)
    assert float(v) / 0.02**2 == pytest.approx(1.0, rel=0.10)


@pytest.mark.slow
def test_default_table_strong_absorption_variance(default_table):
    # var gamma^2 -> 1 and <1 - sigma> -> 1 for gamma >> 1
    p = default_table.primary
    big = p.gamma >= 1e3
    np.testing.assert_allclose(p.var[big] * p.gamma[big] ** 2, 1.0, rtol=0.05)
    np.testing.assert_allclose(p.absorb[big], p.gamma[big] / (1 + p.gamma[big]), rtol=0.01)


@pytest.mark.slow
def test_default_table_sqrt_divergence(default_table):
    g0 = np.logspace(2, 4, 9)
    res = [cavity_correlators(CavityParams(30, g), None, default_table) for g in g0]
    for name in ("cross", "short_range", "current"):
        slope = np.polyfit(np.log(g0), np.log([getattr(r, name) for r in res]), 1)[0]
        assert slope == pytest.approx(0.5, abs=0.05)


@pytest.mark.slow
def test_default_table_cross_bound_report(default_table):
    # N C_kl <= C_kk - I_k amounts to int var <= int a^2; record where it holds.
    for g0 in (0.01, 1.0, 1e3):
        r = cavity_correlators(CavityParams(30, g0), None, default_table)
        assert r.short_range >= 0 and r.cross >= 0
        assert r.cross <= r.short_range
