"""Physical configuration, BS-target-UE geometry and the SNR link budget.

Everything here is an immutable value.  Geometry helpers broadcast over
leading array dimensions so that whole maps of target / UE positions can be
evaluated in one call.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 3.0e8


class ScenarioError(ValueError):
    """Raised for malformed configurations or scenario files."""


@dataclass(frozen=True)
class OfdmConfig:
    """OFDM waveform and BS array parameters.

    ``eta`` is the SNR penalty incurred by dividing out the data symbols
    (1 for constant-envelope modulation).
    """

    f_c: float = 24e9
    delta_f: float = 120e3
    K: int = 100
    M: int = 14
    N_T: int = 4
    N_R: int = 4
    cp_fraction: float = 1.0 / 14.0
    eta: float = 1.0
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
                raise ScenarioError(f"{name} must be a number")
        for name, low in (("K", 2), ("M", 2), ("N_T", 1), ("N_R", 1)):
            v = getattr(self, name)
            if int(v) != v or v < low:
                raise ScenarioError(f"{name} must be an integer >= {low}")
        if self.f_c <= 0 or self.delta_f <= 0 or self.c <= 0:
            raise ScenarioError("f_c, delta_f and c must be positive")
        if self.cp_fraction < 0:
            raise ScenarioError("cp_fraction must be >= 0")
        if self.eta < 1:
            raise ScenarioError("eta must be >= 1")

    @property
    def wavelength(self) -> float:
        return self.c / self.f_c

    @property
    def T(self) -> float:
        """Useful symbol duration 1/delta_f [s]."""
        return 1.0 / self.delta_f

    @property
    def T_s(self) -> float:
        """Symbol duration including the cyclic prefix [s]."""
        return self.T * (1.0 + self.cp_fraction)

    @property
    def T_cp(self) -> float:
        return self.T * self.cp_fraction

    @property
    def bandwidth(self) -> float:
        return self.K * self.delta_f


@dataclass(frozen=True)
class LinkBudget:
    """Distance-free SNR coefficients (linear).

    ``snr_coef_bs`` / ``snr_coef_ue`` are the per-resource-element SNR
    coefficients with the beam steered at the target (beam gain N_T) and
    before the data-removal penalty.  ``beta`` below N_T scales both down
    proportionally; ``None`` means the beam points at the target.
    """

    snr_coef_bs: float = 10 ** 9.8
    snr_coef_ue: float = 10 ** 9.8
    beta: float | None = None

    @classmethod
    def from_db(cls, bs_db: float, ue_db: float | None = None, beta: float | None = None):
        ue_db = bs_db if ue_db is None else ue_db
        return cls(10 ** (bs_db / 10), 10 ** (ue_db / 10), beta)

    def beam_factor(self, cfg: OfdmConfig) -> float:
        if self.beta is None:
            return 1.0
        if not 0 < self.beta <= cfg.N_T:
            raise ScenarioError("beta must lie in (0, N_T]")
        return self.beta / cfg.N_T

    def effective(self, cfg: OfdmConfig) -> tuple[float, float]:
        """Coefficients after beam gain and data-removal penalty."""
        f = self.beam_factor(cfg) / cfg.eta
        return self.snr_coef_bs * f, self.snr_coef_ue * f


@dataclass(frozen=True)
class SceneGeometry:
    """Target / UE geometry seen from the BS at the origin.

    ``psi`` is the angle at the target between the directions to the BS and
    to the UE, so ``psi = pi`` means the UE sits on the BS-target line beyond
    the target.  ``cos_psi``, ``one_plus_cos`` and ``one_minus_cos`` are
    computed from half angles to stay accurate near collinearity.
    """

    q: np.ndarray
    q_U: np.ndarray
    r_B: np.ndarray
    r_U: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    sin_psi: np.ndarray = field(repr=False)
    one_plus_cos: np.ndarray = field(repr=False)
    one_minus_cos: np.ndarray = field(repr=False)

    @property
    def cos_psi(self):
        return np.cos(self.psi)


def derive_geometry(q, q_U) -> SceneGeometry:
    """Derive distances and angles for target ``q`` and UE ``q_U``.

    Both arguments broadcast over leading dimensions; the last axis holds
    the (x, y) coordinates.  A UE on top of the target gives ``r_U = 0`` and
    ``psi = nan``.
    """
    q = np.asarray(q, dtype=float)
    q_U = np.asarray(q_U, dtype=float)
    q, q_U = np.broadcast_arrays(q, q_U)
    x, y = q[..., 0], q[..., 1]
    r_B = np.hypot(x, y)
    if np.any(r_B == 0):
        raise ScenarioError("target must not coincide with the BS")
    d = q_U - q
    r_U = np.hypot(d[..., 0], d[..., 1])
    theta = np.arctan2(y, x)
    phi = np.arctan2(d[..., 1], d[..., 0])
    # angle between -q (towards BS) and d (towards UE)
    dot = -(x * d[..., 0] + y * d[..., 1])
    cross = np.abs(x * d[..., 1] - y * d[..., 0])
    with np.errstate(invalid="ignore"):
        psi = np.where(r_U > 0, np.arctan2(cross, dot), np.nan)
    half = psi / 2
    return SceneGeometry(
        q=q,
        q_U=q_U,
        r_B=r_B,
        r_U=r_U,
        theta=theta,
        phi=phi,
        psi=psi,
        sin_psi=np.sin(psi),
        one_plus_cos=2 * np.cos(half) ** 2,
        one_minus_cos=2 * np.sin(half) ** 2,
    )


def receive_snr(cfg: OfdmConfig, lb: LinkBudget, g: SceneGeometry):
    """Per-element, per-resource-element SNRs after data removal.

    Returns ``(snr_bs, snr_ue)`` with ``snr_bs ~ 1/r_B^4`` (two-way path)
    and ``snr_ue ~ 1/(r_B^2 r_U^2)``.
    """
    if np.any(g.r_U == 0):
        raise ScenarioError("r_U = 0 gives unbounded UE SNR; use the limit bounds instead")
    coef_b, coef_u = lb.effective(cfg)
    return coef_b / g.r_B**4, coef_u / (g.r_B**2 * g.r_U**2)


@dataclass(frozen=True)
class Scenario:
    cfg: OfdmConfig
    link: LinkBudget
    target: np.ndarray | None = None
    ue: np.ndarray | None = None

    def to_dict(self) -> dict:
        ofdm = asdict(self.cfg)
        link = {
            "snr_coef_bs_db": float(10 * np.log10(self.link.snr_coef_bs)),
            "snr_coef_ue_db": float(10 * np.log10(self.link.snr_coef_ue)),
        }
        if self.link.beta is not None:
            link["beta"] = self.link.beta
        out = {"ofdm": ofdm, "link_budget": link}
        if self.target is not None:
            out["target"] = [float(v) for v in self.target]
        if self.ue is not None:
            out["ue"] = [float(v) for v in self.ue]
        return out


_OFDM_KEYS = {f for f in OfdmConfig.__dataclass_fields__}


def _vec2(value, name):
    if value is None:
        return None
    arr = np.asarray(value, dtype=float)
    if arr.shape != (2,) or not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{name} must be a finite [x, y] pair")
    return arr


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    unknown = set(doc) - {"ofdm", "link_budget", "target", "ue"}
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    ofdm = doc.get("ofdm", {})
    bad = set(ofdm) - _OFDM_KEYS
    if bad:
        raise ScenarioError(f"unknown ofdm keys: {sorted(bad)}")
    try:
        cfg = OfdmConfig(**ofdm)
        lbd = doc.get("link_budget", {})
        bad = set(lbd) - {"snr_coef_bs_db", "snr_coef_ue_db", "beta"}
        if bad:
            raise ScenarioError(f"unknown link_budget keys: {sorted(bad)}")
        bs_db = float(lbd.get("snr_coef_bs_db", 98.0))
        ue_db = float(lbd.get("snr_coef_ue_db", bs_db))
        link = LinkBudget.from_db(bs_db, ue_db, lbd.get("beta"))
    except (TypeError, ValueError, AttributeError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from exc
    return Scenario(cfg, link, _vec2(doc.get("target"), "target"), _vec2(doc.get("ue"), "ue"))


def load_scenario(path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
    return scenario_from_dict(doc)


def paper_scenario() -> Scenario:
    """The reference 24 GHz / 120 kHz / 100 x 14 / 4x4 / 98 dB setting."""
    return Scenario(OfdmConfig(), LinkBudget(), np.array([200.0, 50.0]), np.array([300.0, 0.0]))
