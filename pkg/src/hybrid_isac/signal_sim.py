"""Resource-element level OFDM grids for the BS echo and the UE bistatic path.

The model works directly on demodulated resource elements: a single target
path per receiver, noise of unit variance per complex sample, and the
per-element SNR folded into the path gain.  The constant phase of the UE
inner product is absorbed into ``alpha_U``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .scenario import LinkBudget, OfdmConfig, SceneGeometry, receive_snr


@dataclass(frozen=True)
class ChannelParams:
    alpha_B: complex
    alpha_U: complex
    tau_B: float
    tau_U: float
    f_DB: float
    f_DU: float
    theta: float
    guard_violated: bool = False

    @property
    def snr_bs(self) -> float:
        return abs(self.alpha_B) ** 2

    @property
    def snr_ue(self) -> float:
        return abs(self.alpha_U) ** 2


@dataclass(frozen=True)
class RxGrid:
    """Demodulated grids: ``bs`` is (N_R, K, M), ``ue`` and ``data`` are (K, M)."""

    bs: np.ndarray
    ue: np.ndarray
    data: np.ndarray
    data_removed: bool = False
    seed: int = 0


def radial_speeds(q, q_U, v):
    """Approach speeds along the BS line of sight and the bistatic bisector.

    Positive values mean the corresponding path length is shrinking.
    """
    q = np.asarray(q, dtype=float)
    to_bs = -q / np.linalg.norm(q)
    d = np.asarray(q_U, dtype=float) - q
    to_ue = d / np.linalg.norm(d)
    v = np.asarray(v, dtype=float)
    return float(to_bs @ v), float((to_bs + to_ue) @ v)


def truth_channel(cfg: OfdmConfig, g: SceneGeometry, v, lb: LinkBudget, rng=None,
                  snr: tuple[float, float] | None = None) -> ChannelParams:
    """Ground-truth delays, Dopplers and gains for one target.

    ``snr`` overrides the link-budget SNRs (used by SNR sweeps).  Gain phases
    are uniform when ``rng`` is given and zero otherwise.
    """
    if not (np.ndim(g.r_B) == 0 and g.r_B > 0 and g.r_U > 0):
        raise ValueError("truth_channel needs a single geometry with r_B, r_U > 0")
    snr_b, snr_u = receive_snr(cfg, lb, g) if snr is None else snr
    if rng is None:
        ph_b = ph_u = 0.0
    else:
        ph_b, ph_u = rng.uniform(0, 2 * np.pi, 2)
    v_b, v_u = radial_speeds(g.q, g.q_U, v)
    tau_B = 2 * float(g.r_B) / cfg.c
    tau_U = float(g.r_B + g.r_U) / cfg.c
    return ChannelParams(
        alpha_B=complex(np.sqrt(snr_b) * np.exp(1j * ph_b)),
        alpha_U=complex(np.sqrt(snr_u) * np.exp(1j * ph_u)),
        tau_B=tau_B,
        tau_U=tau_U,
        f_DB=2 * v_b / cfg.wavelength,
        f_DU=v_u / cfg.wavelength,
        theta=float(g.theta),
        guard_violated=max(tau_B, tau_U) >= cfg.T_s - cfg.T_cp,
    )


def steering(n_ant: int, theta):
    """Half-wavelength ULA response with the phase centre mid-array."""
    n = np.arange(n_ant) - (n_ant - 1) / 2
    return np.exp(1j * np.pi * n * np.sin(theta))


_QAM16 = np.array([-3, -1, 1, 3]) / np.sqrt(10)


def draw_symbols(rng, shape, modulation: str = "qpsk"):
    if modulation == "qpsk":
        bits = rng.integers(0, 2, size=shape + (2,))
        return ((2 * bits[..., 0] - 1) + 1j * (2 * bits[..., 1] - 1)) / np.sqrt(2)
    if modulation == "16qam":
        idx = rng.integers(0, 4, size=shape + (2,))
        return _QAM16[idx[..., 0]] + 1j * _QAM16[idx[..., 1]]
    if modulation == "none":
        return np.ones(shape, dtype=complex)
    raise ValueError(f"unknown modulation {modulation!r}")


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def synthesize(cfg: OfdmConfig, ch: ChannelParams, seed=0, noise: bool = True,
               modulation: str = "qpsk") -> RxGrid:
    """Received BS and UE grids for one burst.

    Deterministic for a fixed ``seed`` (an int, ``SeedSequence`` or
    ``Generator``).
    """
    rng = _rng(seed)
    K, M, N_R = cfg.K, cfg.M, cfg.N_R
    k = np.arange(K)[:, None]
    m = np.arange(M)[None, :]
    data = draw_symbols(rng, (K, M), modulation)
    phase_b = np.exp(-2j * np.pi * k * cfg.delta_f * ch.tau_B) * np.exp(2j * np.pi * m * cfg.T_s * ch.f_DB)
    phase_u = np.exp(-2j * np.pi * k * cfg.delta_f * ch.tau_U) * np.exp(2j * np.pi * m * cfg.T_s * ch.f_DU)
    b = steering(N_R, ch.theta)
    bs = ch.alpha_B * b[:, None, None] * (phase_b * data)[None]
    ue = ch.alpha_U * phase_u * data
    if noise:
        bs = bs + (rng.standard_normal(bs.shape) + 1j * rng.standard_normal(bs.shape)) / np.sqrt(2)
        ue = ue + (rng.standard_normal(ue.shape) + 1j * rng.standard_normal(ue.shape)) / np.sqrt(2)
    s = int(seed) if isinstance(seed, (int, np.integer)) else 0
    return RxGrid(bs=bs, ue=ue, data=data, seed=s)


def remove_data(grid: RxGrid) -> RxGrid:
    """Divide out the (perfectly decoded) data symbols."""
    if grid.data_removed:
        return grid
    if np.any(np.abs(grid.data) == 0):
        raise ValueError("zero-magnitude data symbol cannot be divided out")
    return replace(grid, bs=grid.bs / grid.data[None], ue=grid.ue / grid.data, data_removed=True)


# binary grid dump: little-endian header then interleaved complex64 payloads
GRID_MAGIC = b"HIRG"
GRID_VERSION = 1
_HEADER = struct.Struct("<4sIIIIQII")
FLAG_DATA_REMOVED = 1


def write_grid(path_or_file, grid: RxGrid) -> None:
    """Dump a grid to a path or an open binary file."""
    N_R, K, M = grid.bs.shape
    flags = FLAG_DATA_REMOVED if grid.data_removed else 0
    own = not hasattr(path_or_file, "write")
    fh = open(path_or_file, "wb") if own else path_or_file
    try:
        fh.write(_HEADER.pack(GRID_MAGIC, GRID_VERSION, N_R, K, M, grid.seed, flags, 0))
        for arr in (grid.bs, grid.ue, grid.data):
            fh.write(np.ascontiguousarray(arr, dtype="<c8").tobytes())
    finally:
        if own:
            fh.close()


def read_grid(path) -> RxGrid:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, N_R, K, M, seed, flags, _ = _HEADER.unpack_from(raw)
    if magic != GRID_MAGIC or version != GRID_VERSION:
        raise ValueError(f"{path}: not a grid dump (magic={magic!r}, version={version})")
    off = _HEADER.size
    sizes = [(N_R, K, M), (K, M), (K, M)]
    arrays = []
    for shape in sizes:
        n = int(np.prod(shape))
        arrays.append(np.frombuffer(raw, dtype="<c8", count=n, offset=off).reshape(shape).astype(complex))
        off += 8 * n
    return RxGrid(*arrays, data_removed=bool(flags & FLAG_DATA_REMOVED), seed=seed)
