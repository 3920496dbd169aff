"""Acceptance criteria.  Each test prints one PASS/FAIL line with the measured values."""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_geometries
from hybrid_isac.coverage import (
    CORRECTION_COEF,
    LEAD_COEF,
    CoverageQuery,
    coverage_mono_closed,
    coverage_mono_polar,
    coverage_numeric,
    optimal_ue_sweep,
    peb_best_ue_samples,
    peb_cdf,
    ue_admissible_region,
)
from hybrid_isac.crlb import (
    crlb_fusion_gain,
    crlb_hybrid_position,
    crlb_mono_position,
    crlb_numeric_oracle,
    crlb_position_limit,
    crlb_single_antenna_position,
    crlb_velocity,
    optimal_bistatic_angle,
)
from hybrid_isac.estimator import monte_carlo
from hybrid_isac.fisher import fisher_set
from hybrid_isac.scenario import derive_geometry

Q = np.array([200.0, 50.0])


def report(n, ok, msg):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {msg}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def _maxrel(a, b):
    return float(np.max(np.abs(a - b) / np.abs(b)))


def test_criterion_1_closed_forms_match_oracle(cfg, lb):
    t0 = time.perf_counter()
    q, qu = random_geometries(10_000, seed=11)
    g = derive_geometry(q, qu)
    fs = fisher_set(cfg, lb, g)
    errs = {
        "hybrid": _maxrel(crlb_hybrid_position(fs, g).crlb, crlb_numeric_oracle(fs, g)),
        "single-antenna": _maxrel(crlb_single_antenna_position(fs, g).crlb,
                                  crlb_numeric_oracle(fs.with_(I_theta=0.0), g)),
        "mono": _maxrel(crlb_mono_position(cfg, lb, g).crlb, crlb_numeric_oracle(fs.with_(I_tauU=0.0), g)),
        "velocity": _maxrel(crlb_velocity(fs, g).crlb, crlb_numeric_oracle(fs, g, "velocity")),
    }
    dt = time.perf_counter() - t0
    ok = max(errs.values()) < 1e-9 and dt < 10
    report(1, ok, ", ".join(f"{k} max rel {v:.1e}" for k, v in errs.items()) + f"; {dt:.2f} s")


def test_criterion_2_reported_point_values(cfg, lb):
    g = derive_geometry(Q, np.array([300.0, 0.0]))
    mono = float(crlb_mono_position(cfg, lb, g).peb)
    limit = float(crlb_position_limit(fisher_set(cfg, lb, g), g).peb)
    ok_mono = any(abs(mono - ref) / ref < 0.02 for ref in (0.96, 0.9134))
    ok_lim = abs(limit - 0.1081) / 0.1081 < 0.02
    # bounds scale as coefficient^(-1/2): the offset that would reconcile each value
    off = {ref: 20 * np.log10(ref / val) for ref, val in ((0.96, mono), (0.9134, mono), (0.1081, limit))}
    report(2, ok_mono and ok_lim,
           f"PEB_mono {mono:.4f} m (refs 0.96 / 0.9134), PEB_limit {limit:.5f} m (ref 0.1081); "
           f"implied coefficient offsets {off[0.96]:.2f} / {off[0.9134]:.2f} / {off[0.1081]:.2f} dB")


def test_criterion_3_fusion_gain_nonnegative(cfg, lb):
    q, qu = random_geometries(100_000, seed=12, min_sin=0.0)
    g = derive_geometry(q, qu)
    fs = fisher_set(cfg, lb, g)
    gain = crlb_fusion_gain(fs, g)
    mono = crlb_mono_position(cfg, lb, g).crlb
    worst = float(np.min(gain / mono))
    # UE directly behind the target seen from the BS
    q2, _ = random_geometries(1000, seed=13)
    g_pi = derive_geometry(q2, q2 * 1.7)
    fs_pi = fisher_set(cfg, lb, g_pi)
    eq = float(np.max(np.abs(crlb_fusion_gain(fs_pi, g_pi)) / crlb_mono_position(cfg, lb, g_pi).crlb))
    report(3, worst >= 0 and eq < 1e-9, f"min gain/C_mono {worst:.3e} over 1e5; max |gain|/C_mono at psi=pi {eq:.1e}")


def test_criterion_4_optimal_angle(cfg, lb):
    step = 1e-4
    psi = np.arange(step, np.pi, step)
    q = np.array([200.0, 0.0])
    qu = q + 100.0 * np.stack([-np.cos(psi), np.sin(psi)], -1)
    g = derive_geometry(np.broadcast_to(q, qu.shape), qu)
    base = fisher_set(cfg, lb, g)
    i_u = float(np.median(base.I_fDU))
    parts, ok = [], True
    for rho in (0.1, 1.0, 10.0, 100.0):
        fs = base.with_(I_fDU=i_u, I_fDB=rho * i_u)
        grid = psi[np.argmin(crlb_velocity(fs, g).crlb)]
        closed = float(optimal_bistatic_angle(rho))
        ok &= abs(grid - closed) <= step and np.pi / 2 < closed < np.pi
        parts.append(f"rho={rho:g}: grid {grid:.4f} closed {closed:.4f}")
    report(4, ok, "; ".join(parts))


@pytest.mark.slow
def test_criterion_5_monte_carlo_efficiency(sc_mc):
    t0 = time.perf_counter()
    rows = monte_carlo(sc_mc, [20.0, 0.0], [-10.0, 0.0, 10.0, 20.0], trials=500, seed=2024)
    dt = time.perf_counter() - t0
    for r in rows:
        print(f"  {r.snr_db:+5.1f} dB  mono {r.rmse_pos_mono_m / r.peb_mono_m:.3f}  "
              f"hybrid {r.rmse_pos_h_m / r.peb_h_m:.3f}  velocity {r.rmse_vel_mps / r.veb_mps:.3f}")
    top = rows[-1]
    m = top.rmse_pos_mono_m / top.peb_mono_m
    h = top.rmse_pos_h_m / top.peb_h_m
    v = top.rmse_vel_mps / top.veb_mps
    ok = 0.75 <= m <= 1.5 and 0.75 <= h <= 1.5 and 0.6 <= v <= 1.5 and dt < 300
    report(5, ok, f"at {top.snr_db:g} dB RMSE/bound mono {m:.3f}, hybrid {h:.3f}, velocity {v:.3f}; "
                  f"{dt:.0f} s single process")


def test_criterion_6_mono_coverage(cfg, lb):
    parts, ok = [], True
    for gamma in (0.5, 1.0, 2.0):
        closed, polar = coverage_mono_closed(cfg, lb, gamma), coverage_mono_polar(cfg, lb, gamma)
        rel = abs(closed - polar) / polar
        ok &= rel < 0.02
        parts.append(f"gamma={gamma:g}: {closed:.0f} vs {polar:.0f} m^2 ({rel:.1e})")
    gam = np.geomspace(0.5, 2.0, 9)
    areas = [coverage_mono_polar(cfg, lb, x) for x in gam]
    slope = np.polyfit(np.log(gam), np.log(areas), 1)[0]
    ok &= abs(slope - 2 / 3) <= 0.03
    report(6, ok, "; ".join(parts) + f"; exponent {slope:.4f}")


def test_criterion_7_coefficients():
    ok = abs(LEAD_COEF - 2.6448) <= 5e-4 and abs(CORRECTION_COEF - 0.0327) <= 1e-4
    report(7, ok, f"lead {LEAD_COEF:.7f}, correction {CORRECTION_COEF:.7f}")


def test_criterion_8_ue_region_and_cdf(cfg, lb):
    g = derive_geometry(Q, 2 * Q)
    fs = fisher_set(cfg, lb, g)
    lo = float(crlb_position_limit(fs, g).peb)
    hi = float(crlb_mono_position(cfg, lb, g).peb)
    worst_area = 0.0
    for gamma in np.linspace(lo, hi, 22)[1:-1]:
        reg = ue_admissible_region(cfg, lb, Q, gamma)
        worst_area = max(worst_area, abs(reg.area - reg.area_numeric) / reg.area_numeric)
    gam = np.array([0.05, 0.1, 0.15, 0.2, 0.25])
    window = 1.05 * np.nanmax(ue_admissible_region(cfg, lb, Q, gam.max()).r_U)
    worst_z = 0.0
    for lam in (1e-6, 1e-5, 3e-5):
        best = peb_best_ue_samples(cfg, lb, Q, lam, 10_000, window, seed=5)
        emp = (best[:, None] <= gam).mean(0)
        p = peb_cdf(cfg, lb, Q, lam, gam)
        sigma = np.sqrt(np.maximum(p * (1 - p), 1e-12) / best.size)
        worst_z = max(worst_z, float(np.max(np.abs(emp - p) / sigma)))
    report(8, worst_area < 5e-3 and worst_z <= 3,
           f"region area max rel diff {worst_area:.1e} over 20 thresholds; CDF max deviation {worst_z:.2f} sigma")


def test_criterion_9_figure_shapes(cfg, lb):
    x = np.arange(0, 1201, 50.0)
    region = (0, 1600, -900, 900)
    bests, ok, parts = [], True, []
    for gamma in (0.25, 0.5, 1.0, 2.0):
        _, areas, best = optimal_ue_sweep(cfg, lb, x, gamma, cell=4.0, region=region)
        k = int(np.argmax(areas))
        unimodal = 0 < k < len(x) - 1 and np.all(np.diff(areas[:k + 1]) >= 0) and np.all(np.diff(areas[k:]) <= 0)
        mono = coverage_numeric(cfg, lb, None, CoverageQuery(gamma, region=region, cell=4.0, side="right")).area
        dominant = bool(np.all(areas >= mono))
        ok &= unimodal and dominant
        bests.append(best)
        parts.append(f"gamma={gamma:g}: x_U*={best:.0f} m")
    ok &= all(b >= a for a, b in zip(bests, bests[1:]))
    report(9, ok, "; ".join(parts) + "; rise-then-fall and hybrid >= mono everywhere" if ok else "; ".join(parts))
