"""Rician baseline: free-space LoS plus i.i.d. CN(0, 1) scattering."""

from dataclasses import dataclass

import numpy as np

from .gbsm import ChannelMatrix, rician_weights
from .geometry import ArraySpec, LinkGeometry, los_gain, los_response
from .units import db2amp

EIG_FLOOR_DB = -300.0


@dataclass(frozen=True)
class RicianParams:
    k_db: float
    beta_db: float
    lam: float

    def __post_init__(self):
        if np.isnan(self.k_db) or np.isneginf(self.k_db):
            raise ValueError("K-factor must be a number or +inf dB")
        if self.beta_db < 0:
            raise ValueError("pathloss must be >= 0 dB")
        if self.lam <= 0:
            raise ValueError("wavelength must be positive")


def rician_channel(p: RicianParams, geo: LinkGeometry, tx: ArraySpec, rx: ArraySpec,
                   rng: np.random.Generator, **meta) -> ChannelMatrix:
    """Draw H = beta_lin * (sqrt(K/(K+1)) H_los + sqrt(1/(K+1)) W), W ~ CN(0, 1) i.i.d.

    Element gains are evaluated at the LoS angles and scale the whole
    matrix, since the scattered part carries no angle information.
    """
    w_los, w_nlos = rician_weights(p.k_db)
    h_los = los_response(geo, tx, rx, p.lam, with_pattern=False)
    shape = (rx.size, tx.size)
    if h_los.shape != shape:
        raise ValueError(f"LoS matrix {h_los.shape} does not match arrays {shape}")
    w = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    h = los_gain(geo, tx, rx, p.lam) * (w_los * h_los + w_nlos * w)
    meta.setdefault("model", "rician")
    return ChannelMatrix(db2amp(-p.beta_db) * h, geometry=geo, **meta)


def freespace_channel(geo: LinkGeometry, tx: ArraySpec, rx: ArraySpec, lam: float, **meta) -> ChannelMatrix:
    """Pure LoS channel with amplitude lam/(4*pi*d) per element pair."""
    h = lam / (4 * np.pi * geo.d3d) * los_response(geo, tx, rx, lam)
    meta.setdefault("model", "freespace")
    return ChannelMatrix(h, geometry=geo, **meta)


def eigenvalues_db(h) -> np.ndarray:
    """Eigenvalues of H^H H in dB, descending, min(dims) of them.

    Zero eigenvalues are reported as ``EIG_FLOOR_DB``.
    """
    h = np.asarray(h)
    if h.size == 0:
        raise ValueError("empty channel matrix")
    if not np.all(np.isfinite(h)):
        raise ValueError("non-finite channel entries")
    s = np.linalg.svd(h, compute_uv=False)
    # numerically zero singular values, same threshold as np.linalg.matrix_rank
    s = np.where(s > s.max(initial=0.0) * max(h.shape) * np.finfo(float).eps, s, 0.0)
    lam = s**2
    with np.errstate(divide="ignore"):
        out = 10 * np.log10(lam)
    return np.maximum(out, EIG_FLOOR_DB)
