"""Sensing coverage, the admissible UE region and the best-UE PEB distribution."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .crlb import (
    bound_coefficients,
    crlb_hybrid_position,
    crlb_mono_from_fisher,
    crlb_mono_position,
    crlb_position_limit,
    crlb_velocity,
)
from .fisher import fisher_set, reduced_ue_delay_info
from .scenario import LinkBudget, OfdmConfig, derive_geometry

log = logging.getLogger(__name__)

# 2 * int_0^{pi/2} cos^{2/3} = sqrt(pi) Gamma(5/6) / Gamma(4/3); (pi^2/6)^{1/3} from c1
LEAD_COEF = float(np.sqrt(np.pi) * special.gamma(5 / 6) / special.gamma(4 / 3) * (np.pi**2 / 6) ** (1 / 3))
CORRECTION_COEF = np.pi / 96


@dataclass(frozen=True)
class CoverageQuery:
    """Threshold(s) plus the evaluation grid.

    ``region`` is ``(xmin, xmax, ymin, ymax)``; ``None`` picks a box that
    contains the mono-static region and the UE neighbourhood.  ``side`` is
    ``"both"`` or ``"right"`` (count only x >= 0).
    """

    gamma_p: float
    gamma_v: float | None = None
    region: tuple | None = None
    cell: float = 1.0
    side: str = "both"

    def __post_init__(self):
        if not self.gamma_p > 0:
            raise ValueError("gamma_p must be positive")
        if not self.cell > 0:
            raise ValueError("cell must be positive")
        if self.side not in ("both", "right"):
            raise ValueError("side must be 'both' or 'right'")
        if self.region is not None:
            xmin, xmax, ymin, ymax = self.region
            if not (xmax > xmin and ymax > ymin):
                raise ValueError("empty region")


@dataclass
class CoverageResult:
    area: float
    mask: np.ndarray
    xs: np.ndarray
    ys: np.ndarray


def coverage_mono_closed(cfg: OfdmConfig, lb: LinkBudget, gamma_p, return_flag: bool = False):
    """Approximate area where the mono-static PEB is below ``gamma_p`` (both lobes)."""
    coef_b, _ = lb.effective(cfg)
    N_R, K, M = cfg.N_R, cfg.K, cfg.M
    g = np.asarray(gamma_p, dtype=float)
    lead = LEAD_COEF * g ** (2 / 3) * (N_R * (N_R**2 - 1) * K * M * coef_b) ** (1 / 3)
    corr = CORRECTION_COEF * cfg.c**2 * (N_R**2 - 1) / (cfg.delta_f**2 * (K**2 - 1))
    area = lead - corr
    clamped = bool(np.any(area < 0))
    if clamped:
        log.warning("mono coverage approximation went negative; clamped to 0 (threshold too small)")
    area = np.maximum(area, 0.0)
    area = float(area) if area.ndim == 0 else area
    return (area, clamped) if return_flag else area


def mono_radius(cfg: OfdmConfig, lb: LinkBudget, gamma_p, theta):
    """Boundary radius of the mono-static coverage region at angle ``theta``.

    Solves ``c1 u^3 + c2 u^2 cos^2 = gamma^2 cos^2`` for ``u = r^2`` by
    Newton iteration from the dominant-term solution.
    """
    k = bound_coefficients(cfg, lb)
    c1, c2 = k["c1"], k["c2"]
    cos2 = np.cos(np.asarray(theta, dtype=float)) ** 2
    g2 = float(gamma_p) ** 2
    u = np.cbrt(g2 * cos2 / c1)
    for _ in range(60):
        f = c1 * u**3 + c2 * u**2 * cos2 - g2 * cos2
        df = 3 * c1 * u**2 + 2 * c2 * u * cos2
        with np.errstate(divide="ignore", invalid="ignore"):
            du = np.where(df > 0, f / np.where(df > 0, df, 1.0), 0.0)
        u = np.maximum(u - du, 0.0)
        if np.all(np.abs(du) <= 1e-14 * np.maximum(u, 1e-300)):
            break
    return np.sqrt(u)


def coverage_mono_polar(cfg: OfdmConfig, lb: LinkBudget, gamma_p) -> float:
    """Mono-static coverage by polar quadrature of the exact boundary."""
    lobe, _ = integrate.quad(lambda t: mono_radius(cfg, lb, gamma_p, t) ** 2, -np.pi / 2, np.pi / 2,
                             limit=200, epsabs=0, epsrel=1e-10)
    # (1/2) int r^2 per lobe, two mirror lobes behind and in front of the array
    return float(lobe)


def auto_region(cfg, lb, q_U, gamma_p):
    """Square box holding the mono-static region and, if given, the UE neighbourhood."""
    R = float(mono_radius(cfg, lb, gamma_p, 0.0))
    L = 1.1 * R
    if q_U is not None:
        L = max(L, 1.1 * (float(np.hypot(*q_U)) + R))
    return (-L, L, -L, L)


def _criterion_ok(cfg, lb, q, q_U, query, criterion):
    if criterion == "mono":
        g = derive_geometry(q, q + np.array([1.0, 0.0]))
        return crlb_mono_position(cfg, lb, g).crlb <= query.gamma_p**2
    g = derive_geometry(q, q_U)
    ok = np.zeros(g.r_B.shape, dtype=bool)
    live = g.r_U > 0
    if not np.any(live):
        return ok
    gl = derive_geometry(q[live], np.broadcast_to(q_U, q[live].shape))
    fs = fisher_set(cfg, lb, gl)
    hit = crlb_hybrid_position(fs, gl).crlb <= query.gamma_p**2
    if criterion == "joint":
        if query.gamma_v is None:
            raise ValueError("joint coverage needs gamma_v")
        hit &= crlb_velocity(fs, gl).crlb <= query.gamma_v**2
    ok[live] = hit
    return ok


def coverage_numeric(cfg: OfdmConfig, lb: LinkBudget, q_U, query: CoverageQuery,
                     criterion: str = "mono", rows_per_chunk: int = 256) -> CoverageResult:
    """Cell-counting area of the region meeting the PEB (and VEB) thresholds.

    ``criterion`` is ``"mono"``, ``"hybrid"`` or ``"joint"``; the latter two
    need ``q_U``.  Cells are evaluated at their centres.
    """
    if criterion not in ("mono", "hybrid", "joint"):
        raise ValueError(f"unknown criterion {criterion!r}")
    if criterion != "mono" and q_U is None:
        raise ValueError(f"{criterion} coverage needs a UE position")
    q_U = None if q_U is None else np.asarray(q_U, dtype=float)
    region = query.region or auto_region(cfg, lb, q_U, query.gamma_p)
    xmin, xmax, ymin, ymax = region
    if query.side == "right":
        xmin = max(xmin, 0.0)
    h = query.cell
    xs = np.arange(xmin + h / 2, xmax, h)
    ys = np.arange(ymin + h / 2, ymax, h)
    mask = np.zeros((ys.size, xs.size), dtype=bool)
    for start in range(0, ys.size, rows_per_chunk):
        yy = ys[start:start + rows_per_chunk]
        pts = np.stack(np.meshgrid(xs, yy), axis=-1)
        # a target exactly at the BS has no defined geometry
        pts[..., 0] = np.where((pts[..., 0] == 0) & (pts[..., 1] == 0), 1e-9, pts[..., 0])
        mask[start:start + yy.size] = _criterion_ok(cfg, lb, pts, q_U, query, criterion)
    return CoverageResult(float(mask.sum()) * h * h, mask, xs, ys)


def optimal_ue_sweep(cfg: OfdmConfig, lb: LinkBudget, x_U, gamma_p: float, cell: float = 2.0,
                     region=None, side: str = "right"):
    """Hybrid coverage area for a UE moved along the positive x-axis.

    Returns ``(x_U, areas, x_best)``.
    """
    x_U = np.asarray(x_U, dtype=float)
    if region is None:
        region = auto_region(cfg, lb, np.array([x_U.max(), 0.0]), gamma_p)
    query = CoverageQuery(gamma_p, region=region, cell=cell, side=side)
    areas = np.array([coverage_numeric(cfg, lb, np.array([x, 0.0]), query, "hybrid").area for x in x_U])
    return x_U, areas, float(x_U[int(np.argmax(areas))])


@dataclass(frozen=True)
class UeRegion:
    """Admissible UE positions around ``q`` for a PEB threshold.

    ``psi`` / ``r_U`` sample the boundary on the half range [0, pi]; the
    region is symmetric about the BS-target line.  ``branch`` is one of
    ``"full-loop"``, ``"partial-loop"``, ``"empty"`` or ``"all-plane"``.
    """

    q: np.ndarray
    gamma_p: float
    psi: np.ndarray
    r_U: np.ndarray
    area: float
    area_numeric: float
    branch: str

    def boundary_points(self):
        """Closed boundary polygon in BS coordinates, shape (n, 2)."""
        q = np.asarray(self.q, dtype=float)
        to_bs = np.arctan2(-q[1], -q[0])
        ok = np.isfinite(self.r_U)
        psi = np.concatenate([self.psi[ok], -self.psi[ok][::-1]])
        r = np.concatenate([self.r_U[ok], self.r_U[ok][::-1]])
        ang = to_bs + psi
        return q + np.stack([r * np.cos(ang), r * np.sin(ang)], axis=-1)

    def contains(self, q_U) -> np.ndarray:
        q_U = np.atleast_2d(np.asarray(q_U, dtype=float))
        g = derive_geometry(np.broadcast_to(self.q, q_U.shape), q_U)
        r_b = np.interp(g.psi, self.psi, np.nan_to_num(self.r_U, nan=0.0))
        return g.r_U <= r_b


def _region_terms(cfg, lb, q):
    g = derive_geometry(q, np.asarray(q, dtype=float) * 2.0)
    fs = fisher_set(cfg, lb, g)
    a, b = float(fs.I_tauB), float(fs.I_theta)
    c2 = cfg.c**2
    r2 = float(g.r_B) ** 2
    c_mono = float(crlb_mono_from_fisher(fs, g).crlb)
    c_lim = float(crlb_position_limit(fs, g).crlb)
    i_red = float(reduced_ue_delay_info(cfg, lb, g.r_B))
    return a, b, c2, r2, c_mono, c_lim, i_red


def _p_terms(a, b, c2, r2, gamma2):
    p1 = gamma2 * (r2 / b + c2 / (4 * a)) - r2 * c2 / (2 * a * b)
    p2 = gamma2 * (r2 / b - c2 / (4 * a))
    return p1, p2


def admissible_radius_sq(cfg: OfdmConfig, lb: LinkBudget, q, gamma_p, psi):
    """Squared UE-target distance on the region boundary (``nan`` outside)."""
    a, b, c2, r2, c_mono, _, i_red = _region_terms(cfg, lb, q)
    g2 = float(gamma_p) ** 2
    p1, p2 = _p_terms(a, b, c2, r2, g2)
    x = np.cos(np.asarray(psi, dtype=float))
    val = i_red / (c2 * (c_mono - g2)) * (1 + x) * (p1 - p2 * x)
    return np.where(val >= 0, val, np.nan)


def admissible_area_closed(cfg: OfdmConfig, lb: LinkBudget, q, gamma_p) -> tuple[float, str]:
    """Closed-form area of the admissible UE region and the branch used."""
    a, b, c2, r2, c_mono, c_lim, i_red = _region_terms(cfg, lb, q)
    g2 = float(gamma_p) ** 2
    if g2 <= c_lim:
        return 0.0, "empty"
    if g2 >= c_mono:
        return np.inf, "all-plane"
    p1, p2 = _p_terms(a, b, c2, r2, g2)
    scale = i_red / (c2 * (c_mono - g2))
    if g2 >= r2 / b:
        return float(np.pi * scale * (p1 - p2 / 2)), "full-loop"
    t = p1 / p2
    partial = (p1 - p2 / 2) * np.arccos(-t) + (p2 - p1 / 2) * np.sqrt(1 - t * t)
    return float(scale * partial), "partial-loop"


def ue_admissible_region(cfg: OfdmConfig, lb: LinkBudget, q, gamma_p, n_psi: int = 721) -> UeRegion:
    """Region of UE positions for which the hybrid PEB at ``q`` is <= ``gamma_p``."""
    q = np.asarray(q, dtype=float)
    area, branch = admissible_area_closed(cfg, lb, q, gamma_p)
    psi = np.linspace(0.0, np.pi, n_psi)
    if branch in ("empty", "all-plane"):
        fill = 0.0 if branch == "empty" else np.inf
        return UeRegion(q, float(gamma_p), psi, np.full(n_psi, fill), area, area, branch)
    rsq = admissible_radius_sq(cfg, lb, q, gamma_p, psi)
    a, b, c2, r2, *_ = _region_terms(cfg, lb, q)
    p1, p2 = _p_terms(a, b, c2, r2, float(gamma_p) ** 2)
    lo = 0.0 if branch == "full-loop" else float(np.arccos(np.clip(p1 / p2, -1, 1)))
    # two mirror halves of (1/2) int r^2 dpsi
    f = lambda s: float(np.nan_to_num(admissible_radius_sq(cfg, lb, q, gamma_p, s), nan=0.0))
    numeric, _ = integrate.quad(f, lo, np.pi, limit=200, epsabs=0, epsrel=1e-11)
    return UeRegion(q, float(gamma_p), psi, np.sqrt(rsq), area, float(numeric), branch)


def peb_cdf(cfg: OfdmConfig, lb: LinkBudget, q, lam, gamma_p):
    """P(best-UE hybrid PEB <= gamma_p) for Poisson UEs of density ``lam``."""
    if np.any(np.asarray(lam) < 0):
        raise ValueError("UE density must be >= 0")
    *_, c_mono, c_lim, _ = _region_terms(cfg, lb, q)
    gam = np.atleast_1d(np.asarray(gamma_p, dtype=float))
    out = np.empty(np.broadcast(gam, np.asarray(lam)).shape)
    lam_b = np.broadcast_to(np.asarray(lam, dtype=float), out.shape)
    gam_b = np.broadcast_to(gam, out.shape)
    for idx in np.ndindex(out.shape):
        g2 = gam_b[idx] ** 2
        if g2 <= c_lim:
            out[idx] = 0.0
        elif g2 >= c_mono:
            out[idx] = 1.0
        else:
            area, _ = admissible_area_closed(cfg, lb, q, gam_b[idx])
            out[idx] = -np.expm1(-lam_b[idx] * area)
    return out if np.ndim(gamma_p) or np.ndim(lam) else float(out.reshape(-1)[0])


def peb_best_ue_samples(cfg: OfdmConfig, lb: LinkBudget, q, lam: float, realizations: int,
                        window_radius: float, seed=0, batch: int = 500):
    """Best-UE hybrid PEB over independent Poisson drops in a disc around ``q``.

    Each realisation places ``Poisson(lam * pi R^2)`` UEs uniformly in the
    disc and keeps the smallest hybrid CRLB (the mono bound if none).
    """
    rng = np.random.default_rng(seed)
    q = np.asarray(q, dtype=float)
    g0 = derive_geometry(q, q * 2.0)
    mono = float(crlb_mono_from_fisher(fisher_set(cfg, lb, g0), g0).crlb)
    counts = rng.poisson(lam * np.pi * window_radius**2, size=realizations)
    best = np.full(realizations, mono)
    for start in range(0, realizations, batch):
        cnt = counts[start:start + batch]
        total = int(cnt.sum())
        if total == 0:
            continue
        rad = window_radius * np.sqrt(rng.uniform(size=total))
        ang = rng.uniform(0, 2 * np.pi, size=total)
        ue = q + np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)
        g = derive_geometry(np.broadcast_to(q, ue.shape), ue)
        crlb = crlb_hybrid_position(fisher_set(cfg, lb, g), g).crlb
        owner = np.repeat(np.arange(cnt.size), cnt)
        blk = best[start:start + batch]
        np.minimum.at(blk, owner, crlb)
    return np.sqrt(best)


def _fmt(x) -> str:
    x = float(x)
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_field_csv(fh, xs, ys, values, value_name: str) -> None:
    """Grid values as ``x_m,y_m,<value_name>`` rows (row-major in y)."""
    fh.write(f"x_m,y_m,{value_name}\n")
    values = np.asarray(values)
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            fh.write(f"{_fmt(x)},{_fmt(y)},{_fmt(values[j, i])}\n")


def write_pgm(fh, values, vmin: float | None = None, vmax: float | None = None) -> None:
    """Binary 8-bit PGM, top row = largest y.  Non-finite cells render white."""
    v = np.asarray(values, dtype=float)[::-1]
    finite = np.isfinite(v)
    lo = np.min(v[finite]) if vmin is None and finite.any() else (vmin or 0.0)
    hi = np.max(v[finite]) if vmax is None and finite.any() else (vmax or 1.0)
    span = hi - lo if hi > lo else 1.0
    img = np.where(finite, np.clip((v - lo) / span, 0, 1) * 254, 255).astype(np.uint8)
    fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
    fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4], dtype=np.uint8, count=w * h).reshape(h, w)
