"""Sequential FFT parameter estimation, localisation fusion and Monte-Carlo runs.

Delay and Doppler transforms use explicit phase signs so that the peak bin
maps straight onto (tau, f_D) for the grid model in
:mod:`hybrid_isac.signal_sim`: delay appears as ``exp(-j 2 pi k df tau)`` and
is recovered with a positive-exponent transform, Doppler appears as
``exp(+j 2 pi m T_s f_D)`` and is recovered with a negative-exponent one.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .crlb import crlb_hybrid_position, crlb_mono_from_fisher, crlb_velocity
from .fisher import FisherOptions, FisherSet, fisher_from_snr
from .scenario import OfdmConfig, Scenario, derive_geometry
from .signal_sim import RxGrid, remove_data, steering, synthesize, truth_channel

log = logging.getLogger(__name__)


class EstimationError(RuntimeError):
    """Raised when an estimate cannot be formed (singular geometry, empty grid)."""


@dataclass(frozen=True)
class FftOversampling:
    L_theta: int = 2048
    L_tau: int = 1024
    L_D: int = 4096

    def __post_init__(self):
        for v in (self.L_theta, self.L_tau, self.L_D):
            if int(v) != v or v < 1:
                raise ValueError("oversampling factors must be positive integers")


@dataclass(frozen=True)
class BsEstimate:
    theta: float
    tau: float
    f_D: float
    wrapped: bool = False


@dataclass(frozen=True)
class UeEstimate:
    tau: float
    f_D: float
    wrapped: bool = False


def _argmax_bin(spectrum):
    return int(np.argmax(spectrum))


def _delay_from_profile(s_k, cfg: OfdmConfig, L_tau: int):
    """Peak of ``|sum_k s_k e^{+j 2 pi k l / N}|`` mapped to a delay."""
    n = L_tau * cfg.K
    profile = np.abs(np.fft.ifft(s_k, n=n))
    l = _argmax_bin(profile)
    return l / (n * cfg.delta_f)


def _doppler_from_series(w_m, cfg: OfdmConfig, L_D: int):
    """Peak of ``|sum_m w_m e^{-j 2 pi m l / N}|`` mapped to [-1/2T_s, 1/2T_s)."""
    n = L_D * cfg.M
    spec = np.abs(np.fft.fft(w_m, n=n))
    l = _argmax_bin(spec)
    if l >= n / 2:
        l -= n
    return l / (n * cfg.T_s)


def _delay_doppler(z, cfg: OfdmConfig, os: FftOversampling):
    """Delay then Doppler of a data-free (K, M) grid."""
    tau = _delay_from_profile(z.sum(axis=1), cfg, os.L_tau)
    k = np.arange(cfg.K)
    # compensate the estimated delay before summing over subcarriers
    w = np.exp(2j * np.pi * k * cfg.delta_f * tau) @ z
    f_D = _doppler_from_series(w, cfg, os.L_D)
    return tau, f_D


def estimate_angle(y, cfg: OfdmConfig, L_theta: int):
    """AoA from the incoherent sum of per-element spatial spectra."""
    n_ant = y.shape[0]
    n = L_theta * n_ant
    spec = kernels.angle_spectrum(np.ascontiguousarray(y.reshape(n_ant, -1), dtype=complex), n)
    l = _argmax_bin(spec)
    u = 2.0 * l / n
    if u >= 1.0:
        u -= 2.0
    return float(np.arcsin(u))


def estimate_bs(y, cfg: OfdmConfig, os: FftOversampling = FftOversampling()) -> BsEstimate:
    """Sequential (angle, delay, Doppler) estimate from the data-free BS grid.

    ``y`` has shape (N_R, K, M).
    """
    y = np.asarray(y)
    if y.size == 0:
        raise EstimationError("empty grid")
    theta = estimate_angle(y, cfg, os.L_theta)
    b = steering(y.shape[0], theta)
    z = np.tensordot(b.conj(), y, axes=(0, 0))
    tau, f_D = _delay_doppler(z, cfg, os)
    return BsEstimate(theta, tau, f_D, wrapped=tau > cfg.T / 2)


def estimate_ue(y, cfg: OfdmConfig, os: FftOversampling = FftOversampling()) -> UeEstimate:
    """(delay, Doppler) estimate from the data-free (K, M) UE grid."""
    y = np.asarray(y)
    if y.size == 0:
        raise EstimationError("empty grid")
    tau, f_D = _delay_doppler(y, cfg, os)
    return UeEstimate(tau, f_D, wrapped=tau > cfg.T / 2)


def localize_mono(theta, tau_B, cfg: OfdmConfig):
    r = cfg.c * tau_B / 2
    return np.array([r * np.cos(theta), r * np.sin(theta)])


@dataclass
class GaussNewtonResult:
    q: np.ndarray
    iterations: int
    converged: bool
    costs: list = field(default_factory=list)


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def localize_hybrid(theta, tau_B, tau_U, fs: FisherSet, q_U, init, max_iter: int = 50,
                    step_tol: float = 1e-9) -> GaussNewtonResult:
    """Weighted least-squares fusion of (tau_B, theta, tau_U) by Gauss-Newton.

    Each residual is weighted by the square root of its Fisher information;
    terms with zero information are dropped.  A step that does not reduce
    the cost is halved (up to 30 times) before the iteration stops.
    """
    c = fs.c
    q_U = np.asarray(q_U, dtype=float)
    w = np.sqrt(np.array([float(fs.I_tauB), float(fs.I_theta), float(fs.I_tauU)]))
    use = w > 0
    if not np.any(use):
        raise EstimationError("no measurement carries information")

    def residual(q):
        x, y = q
        r = np.hypot(x, y)
        d = q - q_U
        ru = np.hypot(*d)
        res = np.array([
            tau_B - 2 * r / c,
            _wrap(theta - np.arctan2(y, x)),
            tau_U - (r + ru) / c,
        ])
        # derivatives of the residuals (minus the model Jacobian)
        J = -np.array([
            [2 * x / (c * r), 2 * y / (c * r)],
            [-y / r**2, x / r**2],
            [x / (c * r) + d[0] / (c * ru), y / (c * r) + d[1] / (c * ru)],
        ])
        return (w * res)[use], (w[:, None] * J)[use]

    q = np.asarray(init, dtype=float).copy()
    res, J = residual(q)
    cost = float(res @ res)
    costs = [cost]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        step, *_ = np.linalg.lstsq(J, -res, rcond=None)
        accepted = False
        for _ in range(30):
            trial = q + step
            t_res, t_J = residual(trial)
            t_cost = float(t_res @ t_res)
            if t_cost <= cost:
                accepted = True
                break
            step = step / 2
        if not accepted:
            converged = float(np.linalg.norm(step)) < 1e-6
            break
        q, res, J, cost = trial, t_res, t_J, t_cost
        costs.append(cost)
        if np.linalg.norm(step) < step_tol:
            converged = True
            break
    if not converged:
        log.debug("Gauss-Newton stopped after %d iterations without converging", it)
    return GaussNewtonResult(q, it, converged, costs)


def estimate_velocity(f_DB, f_DU, q_hat, q_U, cfg: OfdmConfig, max_cond: float = 1e12):
    """Velocity from the two Doppler shifts at an estimated position."""
    q_hat = np.asarray(q_hat, dtype=float)
    to_bs = -q_hat / np.linalg.norm(q_hat)
    d = np.asarray(q_U, dtype=float) - q_hat
    to_ue = d / np.linalg.norm(d)
    A = np.vstack([2 * to_bs, to_bs + to_ue]) / cfg.wavelength
    if np.linalg.cond(A) > max_cond:
        raise EstimationError("BS, target and UE are collinear; velocity is unobservable")
    return np.linalg.solve(A, np.array([f_DB, f_DU]))


@dataclass(frozen=True)
class EstimateRecord:
    theta: float
    tau_B: float
    f_DB: float
    tau_U: float
    f_DU: float
    q_mono: np.ndarray
    q_h: np.ndarray
    v: np.ndarray
    truth: dict
    err_pos_mono: float
    err_pos_h: float
    err_vel: float
    gn_converged: bool = True
    grid: RxGrid | None = None


@dataclass(frozen=True)
class McRow:
    snr_db: float
    rmse_pos_mono_m: float
    rmse_pos_h_m: float
    rmse_vel_mps: float
    peb_mono_m: float
    peb_h_m: float
    veb_mps: float
    trials: int
    seed: int


MC_COLUMNS = list(McRow.__dataclass_fields__)


def sweep_fisher(sc: Scenario, snr_db: float, opts: FisherOptions | None = None):
    """Fisher set when the BS receive SNR is pinned to ``snr_db``.

    The UE SNR follows from the link-budget ratio and the two path lengths.
    """
    g = derive_geometry(sc.target, sc.ue)
    snr_b = 10 ** (snr_db / 10)
    snr_u = snr_b * (sc.link.snr_coef_ue / sc.link.snr_coef_bs) * float(g.r_B) ** 2 / float(g.r_U) ** 2
    return g, snr_b, snr_u, fisher_from_snr(sc.cfg, snr_b, snr_u, g.theta, opts)


def run_trial(sc: Scenario, v, snr_db: float, seed_seq, os: FftOversampling = FftOversampling(),
              noise: bool = True, use_ue: bool = True, keep_grid: bool = False,
              plug_in: bool = False) -> EstimateRecord:
    """One Monte-Carlo trial: synthesise, estimate, localise, solve velocity.

    Fusion weights come from the true geometry unless ``plug_in`` is set, in
    which case they are recomputed at the mono-static position estimate.
    """
    cfg = sc.cfg
    g, snr_b, snr_u, fs = sweep_fisher(sc, snr_db)
    rng = np.random.default_rng(seed_seq)
    ch = truth_channel(cfg, g, v, sc.link, rng=rng, snr=(snr_b, snr_u))
    grid = remove_data(synthesize(cfg, ch, rng, noise=noise))
    bs = estimate_bs(grid.bs, cfg, os)
    ue = estimate_ue(grid.ue, cfg, os)
    q_mono = localize_mono(bs.theta, bs.tau, cfg)
    weights = fs
    if plug_in:
        g_hat = derive_geometry(q_mono, sc.ue)
        snr_u_hat = snr_b * (sc.link.snr_coef_ue / sc.link.snr_coef_bs) * float(g_hat.r_B / g_hat.r_U) ** 2
        weights = fisher_from_snr(cfg, snr_b, snr_u_hat, g_hat.theta)
    if not use_ue:
        weights = weights.with_(I_tauU=0.0)
    gn = localize_hybrid(bs.theta, bs.tau, ue.tau, weights, sc.ue, q_mono)
    try:
        v_hat = estimate_velocity(bs.f_D, ue.f_D, gn.q, sc.ue, cfg)
    except EstimationError:
        v_hat = np.full(2, np.nan)
    q = np.asarray(sc.target, dtype=float)
    v = np.asarray(v, dtype=float)
    truth = {"theta": ch.theta, "tau_B": ch.tau_B, "tau_U": ch.tau_U, "f_DB": ch.f_DB, "f_DU": ch.f_DU,
             "q": q, "v": v}
    return EstimateRecord(
        theta=bs.theta, tau_B=bs.tau, f_DB=bs.f_D, tau_U=ue.tau, f_DU=ue.f_D,
        q_mono=q_mono, q_h=gn.q, v=v_hat, truth=truth,
        err_pos_mono=float(np.sum((q_mono - q) ** 2)),
        err_pos_h=float(np.sum((gn.q - q) ** 2)),
        err_vel=float(np.sum((v_hat - v) ** 2)),
        gn_converged=gn.converged,
        grid=grid if keep_grid else None,
    )


def _trial_errors(args):
    sc, v, snr_db, seed, snr_index, trials, os, noise = args
    out = np.empty((len(trials), 3))
    for row, t in enumerate(trials):
        rec = run_trial(sc, v, snr_db, np.random.SeedSequence([seed, snr_index, t]), os, noise)
        out[row] = rec.err_pos_mono, rec.err_pos_h, rec.err_vel
    return out


def monte_carlo(sc: Scenario, v, snr_sweep_db, trials: int = 500, seed: int = 0,
                os: FftOversampling = FftOversampling(), workers: int = 1,
                noise: bool = True) -> list[McRow]:
    """RMSE of mono / hybrid position and velocity versus BS receive SNR.

    Trial ``t`` at sweep point ``i`` always draws from
    ``SeedSequence([seed, i, t])`` so results do not depend on ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if sc.target is None or sc.ue is None:
        raise ValueError("scenario needs both a target and a UE position")
    rows = []
    n_chunks = max(1, workers)
    idx = np.array_split(np.arange(trials), n_chunks)
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for i, snr_db in enumerate(snr_sweep_db):
            jobs = [(sc, v, float(snr_db), seed, i, list(chunk), os, noise) for chunk in idx if len(chunk)]
            parts = list(pool.map(_trial_errors, jobs)) if pool else [_trial_errors(j) for j in jobs]
            err = np.vstack(parts)
            g, _, _, fs = sweep_fisher(sc, float(snr_db))
            rows.append(McRow(
                snr_db=float(snr_db),
                rmse_pos_mono_m=float(np.sqrt(err[:, 0].mean())),
                rmse_pos_h_m=float(np.sqrt(err[:, 1].mean())),
                rmse_vel_mps=float(np.sqrt(np.nanmean(err[:, 2]))),
                peb_mono_m=float(crlb_mono_from_fisher(fs, g).peb),
                peb_h_m=float(crlb_hybrid_position(fs, g).peb),
                veb_mps=float(crlb_velocity(fs, g).veb),
                trials=trials,
                seed=seed,
            ))
            log.info("snr %.1f dB done", snr_db)
    finally:
        if pool:
            pool.shutdown()
    return rows


def write_mc_csv(rows, path_or_file) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MC_COLUMNS)
        for r in rows:
            w.writerow([repr(getattr(r, k)) if isinstance(getattr(r, k), float) else getattr(r, k) for k in MC_COLUMNS])
    finally:
        if own:
            fh.close()
