"""Scalar Fisher informations for delay, angle and Doppler.

The BS and UE measurements are independent and every EFIM used downstream
is diagonal, so a :class:`FisherSet` of five scalars (or arrays of them)
replaces any general matrix type.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .scenario import LinkBudget, OfdmConfig, SceneGeometry, receive_snr

PI2 = np.pi**2


@dataclass(frozen=True)
class FisherOptions:
    """``use_angle_prior`` adds the uniform (-pi/2, pi/2] prior on the AoA;
    ``sync_std`` is the BS-UE synchronisation error std [s]."""

    use_angle_prior: bool = False
    sync_std: float = 0.0
    wideband_approx: bool = False

    def __post_init__(self):
        if self.sync_std < 0:
            raise ValueError("sync_std must be >= 0")


@dataclass(frozen=True)
class FisherSet:
    I_tauB: np.ndarray | float
    I_theta: np.ndarray | float
    I_tauU: np.ndarray | float
    I_fDB: np.ndarray | float = 0.0
    I_fDU: np.ndarray | float = 0.0
    c: float = 3.0e8
    wavelength: float = 3.0e8 / 24e9

    def with_(self, **kw) -> "FisherSet":
        return replace(self, **kw)


def _subcarrier_term(cfg: OfdmConfig, approx: bool):
    # K(K^2-1) -> K^3 under the large-K approximation
    if approx:
        return cfg.K**3
    return cfg.K * (cfg.K**2 - 1)


def fisher_delay_bs(cfg: OfdmConfig, snr_bs, approx: bool = False):
    return 2 * PI2 * cfg.delta_f**2 * cfg.M * _subcarrier_term(cfg, approx) * cfg.N_R * np.asarray(snr_bs) / 3


def fisher_angle(cfg: OfdmConfig, snr_bs, theta, opts: FisherOptions | None = None):
    info = PI2 * cfg.K * cfg.M * (cfg.N_R**2 - 1) * cfg.N_R * np.asarray(snr_bs) * np.cos(theta) ** 2 / 6
    if opts is not None and opts.use_angle_prior:
        info = info + 12 / PI2
    return info


def fisher_delay_ue(cfg: OfdmConfig, snr_ue, opts: FisherOptions | None = None, approx: bool = False):
    info = 2 * PI2 * cfg.delta_f**2 * cfg.M * _subcarrier_term(cfg, approx) * np.asarray(snr_ue) / 3
    if opts is not None and opts.sync_std > 0:
        info = info / (1 + info * opts.sync_std**2)
    return info


def fisher_doppler(cfg: OfdmConfig, snr_bs, snr_ue):
    base = 2 * PI2 * cfg.T_s**2 * cfg.K * cfg.M * (cfg.M**2 - 1) / 3
    return base * cfg.N_R * np.asarray(snr_bs), base * np.asarray(snr_ue)


def fisher_from_snr(cfg: OfdmConfig, snr_bs, snr_ue, theta, opts: FisherOptions | None = None) -> FisherSet:
    approx = bool(opts and opts.wideband_approx)
    I_fDB, I_fDU = fisher_doppler(cfg, snr_bs, snr_ue)
    return FisherSet(
        I_tauB=fisher_delay_bs(cfg, snr_bs, approx),
        I_theta=fisher_angle(cfg, snr_bs, theta, opts),
        I_tauU=fisher_delay_ue(cfg, snr_ue, opts, approx),
        I_fDB=I_fDB,
        I_fDU=I_fDU,
        c=cfg.c,
        wavelength=cfg.wavelength,
    )


def fisher_set(cfg: OfdmConfig, lb: LinkBudget, g: SceneGeometry, opts: FisherOptions | None = None) -> FisherSet:
    """All five Fisher informations for one (or a map of) geometries."""
    snr_b, snr_u = receive_snr(cfg, lb, g)
    return fisher_from_snr(cfg, snr_b, snr_u, g.theta, opts)


def reduced_ue_delay_info(cfg: OfdmConfig, lb: LinkBudget, r_B, approx: bool = False):
    """UE delay information with the 1/r_U^2 factor pulled out.

    ``I_tauU = reduced / r_U^2`` whenever no synchronisation error is
    modelled.
    """
    _, coef_u = lb.effective(cfg)
    return 2 * PI2 * cfg.delta_f**2 * cfg.M * _subcarrier_term(cfg, approx) * coef_u / (3 * np.asarray(r_B) ** 2)
