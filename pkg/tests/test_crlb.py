import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_geometries
from hybrid_isac.crlb import (
    bound_coefficients,
    crlb_fusion_gain,
    crlb_hybrid_position,
    crlb_mono_from_fisher,
    crlb_mono_position,
    crlb_numeric_oracle,
    crlb_position_limit,
    crlb_single_antenna_position,
    crlb_table,
    crlb_velocity,
    optimal_bistatic_angle,
)
from hybrid_isac.fisher import FisherOptions, FisherSet, fisher_from_snr, fisher_set
from hybrid_isac.scenario import LinkBudget, OfdmConfig, derive_geometry

CFG = OfdmConfig()
LB = LinkBudget()


def random_fisher(n, seed=1):
    """Random geometries with per-sample SNRs spanning several decades."""
    q, qu = random_geometries(n, seed)
    g = derive_geometry(q, qu)
    rng = np.random.default_rng(seed + 100)
    snr_b = 10 ** rng.uniform(-3, 3, n)
    snr_u = 10 ** rng.uniform(-3, 3, n)
    return fisher_from_snr(CFG, snr_b, snr_u, g.theta), g


def _rel(a, b):
    return np.max(np.abs(a - b) / np.abs(b))


def test_hybrid_matches_oracle():
    fs, g = random_fisher(5000)
    assert _rel(crlb_hybrid_position(fs, g).crlb, crlb_numeric_oracle(fs, g)) < 1e-9


def test_mono_matches_oracle_and_coefficients():
    q, qu = random_geometries(3000, 3)
    g = derive_geometry(q, qu)
    fs = fisher_set(CFG, LB, g).with_(I_tauU=0.0)
    oracle = crlb_numeric_oracle(fs, g)
    assert _rel(crlb_mono_from_fisher(fs, g).crlb, oracle) < 1e-9
    assert _rel(crlb_mono_position(CFG, LB, g).crlb, oracle) < 1e-9


def test_single_antenna_and_velocity_match_oracle():
    fs, g = random_fisher(5000, seed=7)
    fs1 = fs.with_(I_theta=0.0)
    assert _rel(crlb_single_antenna_position(fs1, g).crlb, crlb_numeric_oracle(fs1, g)) < 1e-9
    assert _rel(crlb_velocity(fs, g).crlb, crlb_numeric_oracle(fs, g, "velocity")) < 1e-9


def test_coefficient_forms_agree_with_fisher_forms():
    q, qu = random_geometries(500, 11)
    g = derive_geometry(q, qu)
    fs = fisher_set(CFG, LB, g)
    k = bound_coefficients(CFG, LB)
    r2, ru2 = g.r_B**2, g.r_U**2
    s2 = g.sin_psi**2
    single = k["c3"] * r2 * ru2 / s2 + k["c4"] * r2**2 / g.one_minus_cos
    vel = k["c5"] * r2 * ru2 / s2 + k["c6"] * r2**2 / g.one_minus_cos
    assert _rel(single, crlb_single_antenna_position(fs.with_(I_theta=0.0), g).crlb) < 1e-12
    assert _rel(vel, crlb_velocity(fs, g).crlb) < 1e-12


def test_mono_reference_point():
    g = derive_geometry([200, 50], [300, 0])
    fs = fisher_set(CFG, LB, g)
    peb = crlb_mono_position(CFG, LB, g).peb
    assert peb == pytest.approx(float(crlb_mono_from_fisher(fs, g).peb), rel=1e-12)
    assert 0.3 < peb < 0.32


def test_mono_angle_structure():
    r = 250.0
    g0 = derive_geometry([r, 0], [0, 300])
    g1 = derive_geometry([r * np.cos(np.pi / 3), r * np.sin(np.pi / 3)], [0, 300])
    k = bound_coefficients(CFG, LB)
    c0 = crlb_mono_position(CFG, LB, g0).crlb
    c1 = crlb_mono_position(CFG, LB, g1).crlb
    assert c0 == pytest.approx(k["c1"] * r**6 + k["c2"] * r**4)
    assert c1 - c0 == pytest.approx(k["c1"] * r**6 * (4 - 1), rel=1e-12)


def test_mono_with_angle_prior_single_antenna():
    cfg = OfdmConfig(N_R=1)
    g = derive_geometry([100, 10], [0, 100])
    assert crlb_mono_position(cfg, LB, g).crlb == np.inf
    with_prior = crlb_mono_position(cfg, LB, g, FisherOptions(use_angle_prior=True)).crlb
    assert np.isfinite(with_prior)


def test_hybrid_reduces_to_mono():
    fs, g = random_fisher(200, seed=5)
    mono = crlb_mono_from_fisher(fs, g).crlb
    assert _rel(crlb_hybrid_position(fs.with_(I_tauU=0.0), g).crlb, mono) < 1e-13
    gb = derive_geometry([100.0, 20.0], [200.0, 40.0])
    f1 = fisher_set(CFG, LB, gb)
    assert gb.psi == pytest.approx(np.pi)
    assert crlb_hybrid_position(f1, gb).crlb == pytest.approx(crlb_mono_from_fisher(f1, gb).crlb, rel=1e-12)


def test_fusion_gain_closed_form():
    fs, g = random_fisher(5000, seed=9)
    gain = crlb_fusion_gain(fs, g)
    assert np.all(gain >= 0)
    diff = crlb_mono_from_fisher(fs, g).crlb - crlb_hybrid_position(fs, g).crlb
    big = diff > 1e-6 * crlb_mono_from_fisher(fs, g).crlb
    assert _rel(gain[big], diff[big]) < 1e-9


def test_limit_values():
    g = derive_geometry([200, 50], [300, 0])
    fs = fisher_set(CFG, LB, g)
    lim = crlb_position_limit(fs, g).crlb
    # delay-limited here, so the floor is reached with the UE just off the far side of the line
    assert CFG.c**2 / (4 * fs.I_tauB) < g.r_B**2 / fs.I_theta
    q = np.array([200.0, 50.0])
    u = q / np.linalg.norm(q)
    gn = derive_geometry(q, q + 100 * u + 1e-2 * np.array([-u[1], u[0]]))
    # UE terms scale like I_tauU * (pi - psi)^2, so the UE delay must be very sharp
    fn = fisher_set(CFG, LB, gn).with_(I_tauU=1e40)
    assert crlb_position_limit(fn, gn).crlb == pytest.approx(lim, rel=1e-12)
    assert crlb_hybrid_position(fn, gn).crlb == pytest.approx(lim, rel=1e-6)
    # at a generic angle the huge-I_tauU value stays above the floor
    big = crlb_hybrid_position(fs.with_(I_tauU=1e30), g).crlb
    r2, a, b = g.r_B**2, fs.I_tauB, fs.I_theta
    expect = 2 * CFG.c**2 * r2 / (4 * r2 * a * (1 - np.cos(g.psi)) + CFG.c**2 * b * (1 + np.cos(g.psi)))
    assert big == pytest.approx(expect, rel=1e-9)
    assert big > lim
    assert crlb_position_limit(fs.with_(I_theta=0.0), g).crlb == pytest.approx(CFG.c**2 / (4 * fs.I_tauB))
    assert crlb_position_limit(fs.with_(I_theta=1e300), g).crlb < 1e-290
    assert crlb_position_limit(fs.with_(I_tauB=0.0, I_theta=0.0), g).crlb == np.inf


def test_hybrid_floor_and_monotone_fusion():
    fs, g = random_fisher(2000, seed=13)
    lim = crlb_position_limit(fs, g).crlb
    prev = crlb_hybrid_position(fs.with_(I_tauU=0.0), g).crlb
    for scale in (1e-2, 1, 1e2, 1e4):
        cur = crlb_hybrid_position(fs.with_(I_tauU=fs.I_tauU * scale), g).crlb
        assert np.all(cur <= prev * (1 + 1e-12))
        assert np.all(cur >= lim * (1 - 1e-12))
        prev = cur


def test_single_antenna_degenerate_angles():
    g_mid = derive_geometry([200.0, 0.0], [200.0, 100.0])
    fs = fisher_set(CFG, LB, g_mid).with_(I_theta=0.0)
    assert np.isfinite(crlb_single_antenna_position(fs, g_mid).crlb)
    for qu in ([100.0, 0.0], [300.0, 0.0]):
        g = derive_geometry([200.0, 0.0], qu)
        f = fisher_set(CFG, LB, g).with_(I_theta=0.0)
        assert crlb_single_antenna_position(f, g).crlb == np.inf
        assert crlb_numeric_oracle(f, g) == np.inf


def test_velocity_degenerate_cases():
    g = derive_geometry([200.0, 50.0], [400.0, 100.0])
    fs = fisher_set(CFG, LB, g)
    assert crlb_velocity(fs, g).crlb == np.inf
    g2 = derive_geometry([200.0, 50.0], [0.0, 300.0])
    fs2 = fisher_set(CFG, LB, g2)
    assert np.isfinite(crlb_velocity(fs2, g2).crlb)
    assert crlb_velocity(fs2.with_(I_fDB=0.0), g2).crlb == np.inf
    assert crlb_velocity(fs2.with_(I_fDU=0.0), g2).crlb == np.inf


def test_non_finite_fisher_rejected():
    g = derive_geometry([200.0, 50.0], [0.0, 300.0])
    fs = fisher_set(CFG, LB, g)
    with pytest.raises(ValueError):
        crlb_hybrid_position(fs.with_(I_tauB=np.nan), g)
    with pytest.raises(ValueError):
        crlb_velocity(fs.with_(I_fDU=-1.0), g)


def test_optimal_angle_values():
    assert optimal_bistatic_angle(1.0) == pytest.approx(np.arccos(2 * np.sqrt(2) - 3), rel=1e-14)
    assert optimal_bistatic_angle(1.0) == pytest.approx(1.7432, abs=1e-4)
    assert optimal_bistatic_angle(1e12) == pytest.approx(np.pi / 2, abs=1e-5)
    # psi* ~ pi - 2 rho^(1/4) for small rho
    assert optimal_bistatic_angle(1e-12) == pytest.approx(np.pi - 2e-3, abs=1e-5)
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            optimal_bistatic_angle(bad)


def _grid_argmin(first, second, rho):
    """argmin over psi of first/(I_U sin^2) + second/(2 I_B (1 - cos))."""
    psi = np.arange(1e-4, np.pi, 1e-4)
    f = first / np.sin(psi) ** 2 + second / (2 * rho * (1 - np.cos(psi)))
    return psi[np.argmin(f)]


@pytest.mark.parametrize("rho", [0.1, 1.0, 10.0, 100.0])
def test_optimal_angle_matches_both_forms(rho):
    ref = optimal_bistatic_angle(rho)
    assert np.pi / 2 < ref < np.pi
    # same shape for the velocity bound and the single-antenna position bound
    for num in (CFG.wavelength**2, CFG.c**2):
        assert abs(_grid_argmin(num, num, rho) - ref) <= 1e-4


@settings(max_examples=200, deadline=None)
@given(st.floats(-1.3, 1.3), st.floats(20, 600), st.floats(-800, 800), st.floats(-800, 800))
def test_bounds_even_in_psi(th, r, ux, uy):
    q = r * np.array([np.cos(th), np.sin(th)])
    qu = np.array([ux, uy])
    if np.linalg.norm(qu - q) < 1.0 or derive_geometry(q, qu).sin_psi < 1e-3:
        return
    u = q / r
    mirror = 2 * (qu @ u) * u - qu
    g1, g2 = derive_geometry(q, qu), derive_geometry(q, mirror)
    f1, f2 = fisher_set(CFG, LB, g1), fisher_set(CFG, LB, g2)
    assert crlb_hybrid_position(f1, g1).crlb == pytest.approx(crlb_hybrid_position(f2, g2).crlb, rel=1e-9)
    v1, v2 = crlb_velocity(f1, g1).crlb, crlb_velocity(f2, g2).crlb
    if np.isfinite(v1) or np.isfinite(v2):
        assert v1 == pytest.approx(v2, rel=1e-9)


def test_table_entries():
    g = derive_geometry([200.0, 50.0], [0.0, 300.0])
    t = crlb_table(fisher_set(CFG, LB, g), g)
    assert t["position"]["bistatic"] == np.inf
    assert t["velocity"]["mono"] == np.inf
    assert t["velocity"]["bistatic"] == np.inf
    assert t["position_single_antenna"]["mono"] == np.inf
    assert np.isfinite(t["position"]["hybrid"]) and t["position"]["hybrid"] <= t["position"]["mono"]
    assert np.isfinite(t["position_single_antenna"]["hybrid"])
    assert np.isfinite(t["velocity"]["hybrid"])


def test_oracle_singular_case():
    g = derive_geometry([200.0, 0.0], [100.0, 0.0])
    fs = FisherSet(I_tauB=1e18, I_theta=0.0, I_tauU=1e18)
    assert crlb_numeric_oracle(fs, g) == np.inf
    with pytest.raises(ValueError):
        crlb_numeric_oracle(fs, g, "acceleration")
