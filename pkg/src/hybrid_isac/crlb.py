"""Closed-form position / velocity CRLBs and a direct Jacobian oracle.

Closed forms work in the polar parameterisation (r_B, r_U, psi) taken from
:class:`~hybrid_isac.scenario.SceneGeometry`; unobservable configurations
return ``inf`` rather than raising.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fisher import PI2, FisherOptions, FisherSet, fisher_angle, fisher_delay_bs
from .scenario import LinkBudget, OfdmConfig, SceneGeometry

COLLINEAR_TOL = 1e-12


@dataclass(frozen=True)
class PositionBound:
    crlb: np.ndarray | float
    components: tuple = ()

    @property
    def peb(self):
        return np.sqrt(self.crlb)


@dataclass(frozen=True)
class VelocityBound:
    crlb: np.ndarray | float

    @property
    def veb(self):
        return np.sqrt(self.crlb)


def _scalar(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
    return _scalar(out)


def _check_finite(fs: FisherSet, names=("I_tauB", "I_theta", "I_tauU")):
    for name in names:
        v = np.asarray(getattr(fs, name), dtype=float)
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError(f"{name} must be finite and non-negative")


def _polar(g: SceneGeometry):
    """sin^2(psi), 1+cos(psi), 1-cos(psi) with collinear snapping."""
    sin_psi = np.asarray(g.sin_psi, dtype=float)
    opc = np.asarray(g.one_plus_cos, dtype=float)
    omc = np.asarray(g.one_minus_cos, dtype=float)
    collinear = np.abs(sin_psi) < COLLINEAR_TOL
    if np.any(collinear):
        back = collinear & (opc < 1)
        front = collinear & (opc >= 1)
        sin_psi = np.where(collinear, 0.0, sin_psi)
        opc = np.where(back, 0.0, np.where(front, 2.0, opc))
        omc = np.where(front, 0.0, np.where(back, 2.0, omc))
    return sin_psi**2, opc, omc


def hybrid_terms(fs: FisherSet, g: SceneGeometry):
    """Numerator and denominator of the hybrid position CRLB."""
    a, b, s = (np.asarray(v, dtype=float) for v in (fs.I_tauB, fs.I_theta, fs.I_tauU))
    c2 = fs.c**2
    r2 = np.asarray(g.r_B, dtype=float) ** 2
    s2, opc, _ = _polar(g)
    num = 4 * c2 * r2 * a + c2 * c2 * b + 2 * c2 * r2 * opc * s
    den = 4 * c2 * a * b + 4 * r2 * a * s * s2 + c2 * b * s * opc**2
    return num, den


def crlb_hybrid_position(fs: FisherSet, g: SceneGeometry) -> PositionBound:
    """Position CRLB fusing BS delay + AoA with the UE bistatic delay."""
    _check_finite(fs)
    num, den = hybrid_terms(fs, g)
    return PositionBound(_ratio(num, den), (fs.I_tauB, fs.I_theta, fs.I_tauU))


def crlb_mono_from_fisher(fs: FisherSet, g: SceneGeometry) -> PositionBound:
    """``r_B^2 / I_theta + c^2 / (4 I_tauB)``."""
    _check_finite(fs, ("I_tauB", "I_theta"))
    crlb = _ratio(np.asarray(g.r_B, dtype=float) ** 2, fs.I_theta) + _ratio(fs.c**2, 4 * np.asarray(fs.I_tauB))
    return PositionBound(crlb, (fs.I_tauB, fs.I_theta, 0.0))


def bound_coefficients(cfg: OfdmConfig, lb: LinkBudget, approx: bool = False) -> dict:
    """Geometry-free constants c1..c6 of the closed-form bounds.

    c3/c4 are the single-antenna position constants and c5/c6 the velocity
    constants.  With ``approx`` the K(K^2-1) factor becomes K^3 = W^2 K/df^2.
    """
    coef_b, coef_u = lb.effective(cfg)
    K, M, N_R, c = cfg.K, cfg.M, cfg.N_R, cfg.c
    kk = K**3 if approx else K * (K**2 - 1)
    delay = PI2 * cfg.delta_f**2 * M * kk
    doppler = PI2 * cfg.T_s**2 * K * M * (M**2 - 1)
    lam2 = cfg.wavelength**2
    with np.errstate(divide="ignore"):
        c1 = 6 / (PI2 * N_R * K * M * (N_R**2 - 1) * coef_b) if N_R > 1 else np.inf
    return {
        "c1": c1,
        "c2": 3 * c**2 / (8 * delay * N_R * coef_b),
        "c3": 3 * c**2 / (2 * delay * coef_u),
        "c4": 3 * c**2 / (4 * delay * N_R * coef_b),
        "c5": 3 * lam2 / (2 * doppler * coef_u),
        "c6": 3 * lam2 / (4 * doppler * N_R * coef_b),
    }


def crlb_mono_position(cfg: OfdmConfig, lb: LinkBudget, g: SceneGeometry,
                       opts: FisherOptions | None = None) -> PositionBound:
    """BS mono-static position CRLB ``c1 r^6 / cos^2(theta) + c2 r^4``.

    With an angle prior the constant-coefficient form no longer applies and
    the Fisher form is used instead.
    """
    if opts is not None and (opts.use_angle_prior or opts.wideband_approx):
        snr_b = lb.effective(cfg)[0] / np.asarray(g.r_B, dtype=float) ** 4
        fs = FisherSet(
            I_tauB=fisher_delay_bs(cfg, snr_b, opts.wideband_approx),
            I_theta=fisher_angle(cfg, snr_b, g.theta, opts),
            I_tauU=0.0,
            c=cfg.c,
            wavelength=cfg.wavelength,
        )
        return crlb_mono_from_fisher(fs, g)
    k = bound_coefficients(cfg, lb)
    r = np.asarray(g.r_B, dtype=float)
    cos2 = np.cos(g.theta) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        angle = np.where(cos2 > 0, k["c1"] * r**6 / np.where(cos2 > 0, cos2, 1.0), np.inf)
    crlb = _scalar(angle + k["c2"] * r**4)
    return PositionBound(crlb)


def crlb_single_antenna_position(fs: FisherSet, g: SceneGeometry) -> PositionBound:
    """Delay-only (no AoA) hybrid CRLB, valid whenever ``I_theta = 0``."""
    s2, _, omc = _polar(g)
    c2 = fs.c**2
    crlb = _ratio(c2, np.asarray(fs.I_tauU) * s2) + _ratio(c2, 2 * np.asarray(fs.I_tauB) * omc)
    return PositionBound(crlb, (fs.I_tauB, 0.0, fs.I_tauU))


def crlb_fusion_gain(fs: FisherSet, g: SceneGeometry):
    """Net CRLB reduction from fusing the UE delay (``C_mono - C_h``).

    Evaluated from its own closed form, not by subtraction.  ``nan`` where
    the mono bound is unbounded.
    """
    _check_finite(fs)
    a, b, s = (np.asarray(v, dtype=float) for v in (fs.I_tauB, fs.I_theta, fs.I_tauU))
    c2 = fs.c**2
    r2 = np.asarray(g.r_B, dtype=float) ** 2
    s2, opc, _ = _polar(g)
    _, den = hybrid_terms(fs, g)
    top = 16 * a**2 * r2**2 * s2 + c2**2 * b**2 * opc**2
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = s / (4 * a * b) * top / den
        gain = np.where(a * b > 0, np.where(s > 0, gain, 0.0), np.nan)
    return _scalar(gain)


def crlb_position_limit(fs: FisherSet, g: SceneGeometry) -> PositionBound:
    """Hybrid CRLB floor as the UE delay becomes arbitrarily accurate."""
    r2 = np.asarray(g.r_B, dtype=float) ** 2
    crlb = np.minimum(_ratio(fs.c**2, 4 * np.asarray(fs.I_tauB, dtype=float)), _ratio(r2, fs.I_theta))
    return PositionBound(_scalar(crlb), (fs.I_tauB, fs.I_theta, np.inf))


def crlb_velocity(fs: FisherSet, g: SceneGeometry) -> VelocityBound:
    """Velocity CRLB from the BS and UE Doppler shifts.

    Depends on geometry only; the true velocity never enters.
    """
    _check_finite(fs, ("I_fDB", "I_fDU"))
    s2, _, omc = _polar(g)
    lam2 = fs.wavelength**2
    crlb = _ratio(lam2, np.asarray(fs.I_fDU) * s2) + _ratio(lam2, 2 * np.asarray(fs.I_fDB) * omc)
    return VelocityBound(crlb)


def optimal_bistatic_angle(rho):
    """Bistatic angle minimising the delay/Doppler-only hybrid bounds.

    ``rho`` is the BS-to-UE Fisher information ratio (I_B / I_U).
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(~(rho > 0)):
        raise ValueError("rho must be positive")
    # 2 sqrt(rho(rho+1)) - 2 rho - 1 written to avoid cancellation at large rho
    arg = 2 * rho / (np.sqrt(rho * (rho + 1)) + rho) - 1
    return _scalar(np.arccos(np.clip(arg, -1.0, 1.0)))


def position_jacobian(g: SceneGeometry, c: float):
    """d(tau_B, theta, tau_U) / d(x, y), shape (..., 3, 2)."""
    q = np.asarray(g.q, dtype=float)
    x, y = q[..., 0], q[..., 1]
    r = np.asarray(g.r_B, dtype=float)
    d = q - np.asarray(g.q_U, dtype=float)
    ru = np.asarray(g.r_U, dtype=float)
    J = np.empty(q.shape[:-1] + (3, 2))
    J[..., 0, 0] = 2 * x / (c * r)
    J[..., 0, 1] = 2 * y / (c * r)
    J[..., 1, 0] = -y / r**2
    J[..., 1, 1] = x / r**2
    J[..., 2, 0] = x / (c * r) + d[..., 0] / (c * ru)
    J[..., 2, 1] = y / (c * r) + d[..., 1] / (c * ru)
    return J


def velocity_jacobian(g: SceneGeometry, wavelength: float):
    """d(f_D^B, f_D^U) / d(v_x, v_y), shape (..., 2, 2)."""
    q = np.asarray(g.q, dtype=float)
    to_bs = -q / np.asarray(g.r_B, dtype=float)[..., None]
    to_ue = (np.asarray(g.q_U, dtype=float) - q) / np.asarray(g.r_U, dtype=float)[..., None]
    J = np.empty(q.shape[:-1] + (2, 2))
    J[..., 0, :] = 2 * to_bs / wavelength
    J[..., 1, :] = (to_bs + to_ue) / wavelength
    return J


def crlb_numeric_oracle(fs: FisherSet, g: SceneGeometry, which: str = "position"):
    """trace((J^T I J)^-1) built directly from Cartesian Jacobians.

    Used to cross-check the closed forms.  For the 2x2 information matrix
    the trace of the inverse is trace(F) / det(F); the determinant is taken
    from the Cauchy-Binet sum over pairs of Jacobian rows, which avoids the
    cancellation of F00 F11 - F01^2 near collinear geometries.  Singular
    information matrices return ``inf``.
    """
    if which == "position":
        J = position_jacobian(g, fs.c)
        names = ("I_tauB", "I_theta", "I_tauU")
    elif which == "velocity":
        J = velocity_jacobian(g, fs.wavelength)
        names = ("I_fDB", "I_fDU")
    else:
        raise ValueError(f"unknown bound {which!r}")
    info = np.stack(np.broadcast_arrays(*(np.asarray(getattr(fs, n), dtype=float) for n in names)), -1)
    info = np.broadcast_to(info, J.shape[:-2] + info.shape[-1:])
    F = np.einsum("...ki,...k,...kj->...ij", J, info, J)
    det = np.zeros(J.shape[:-2])
    for i in range(J.shape[-2]):
        for j in range(i + 1, J.shape[-2]):
            minor = J[..., i, 0] * J[..., j, 1] - J[..., i, 1] * J[..., j, 0]
            det = det + info[..., i] * info[..., j] * minor**2
    scale = F[..., 0, 0] * F[..., 1, 1]
    singular = ~(det > 1e-13 * scale)
    with np.errstate(divide="ignore", invalid="ignore"):
        tr = (F[..., 0, 0] + F[..., 1, 1]) / np.where(singular, 1.0, det)
    return _scalar(np.where(singular, np.inf, tr))


def crlb_table(fs: FisherSet, g: SceneGeometry) -> dict:
    """Position / single-antenna position / velocity CRLB per sensing mode."""
    mono = fs.with_(I_tauU=0.0, I_fDU=0.0)
    bistatic = fs.with_(I_tauB=0.0, I_theta=0.0, I_fDB=0.0)
    single = fs.with_(I_theta=0.0)
    single_mono = mono.with_(I_theta=0.0)
    return {
        "position": {
            "mono": crlb_mono_from_fisher(mono, g).crlb,
            "bistatic": crlb_hybrid_position(bistatic, g).crlb,
            "hybrid": crlb_hybrid_position(fs, g).crlb,
        },
        "position_single_antenna": {
            "mono": crlb_mono_from_fisher(single_mono, g).crlb,
            "bistatic": crlb_hybrid_position(bistatic, g).crlb,
            "hybrid": crlb_single_antenna_position(single, g).crlb,
        },
        "velocity": {
            "mono": crlb_velocity(mono, g).crlb,
            "bistatic": crlb_velocity(bistatic, g).crlb,
            "hybrid": crlb_velocity(fs, g).crlb,
        },
    }
