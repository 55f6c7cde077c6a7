"""RIS control, cascade composition and the single-element radar link budget."""

from dataclasses import dataclass

import numpy as np

from .gbsm import ChannelMatrix
from .geometry import ArraySpec, ElementPattern, amplitude_gain, pattern_gain

UNIT_MODULUS_TOL = 1e-12


@dataclass(frozen=True)
class RISControl:
    """Unit-modulus reflection coefficients, Q = diag(mu)."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=complex).reshape(-1)
        if np.any(np.abs(np.abs(mu) - 1) > UNIT_MODULUS_TOL):
            raise ValueError("RIS coefficients must have unit modulus")
        object.__setattr__(self, "mu", mu)

    @classmethod
    def zero_phase(cls, n: int) -> "RISControl":
        return cls(np.ones(n, dtype=complex))

    @classmethod
    def from_phases(cls, phases) -> "RISControl":
        return cls(np.exp(1j * np.asarray(phases, dtype=float)))

    @property
    def phases(self) -> np.ndarray:
        return np.angle(self.mu)

    def with_phase(self, i: int, phase: float) -> "RISControl":
        mu = self.mu.copy()
        mu[i] = np.exp(1j * phase)
        return RISControl(mu)

    def __len__(self):
        return self.mu.size


@dataclass(frozen=True)
class ChannelTriple:
    """Direct BS-UE (H0), BS-RIS (HA) and RIS-UE (HB) channels."""

    h0: ChannelMatrix
    ha: ChannelMatrix
    hb: ChannelMatrix

    def __post_init__(self):
        for name in ("h0", "ha", "hb"):
            v = getattr(self, name)
            if not isinstance(v, ChannelMatrix):
                object.__setattr__(self, name, ChannelMatrix(v, link=name.upper()))
        n_rx, n_tx = self.h0.shape
        if self.ha.shape[1] != n_tx or self.hb.shape[0] != n_rx or self.hb.shape[1] != self.ha.shape[0]:
            raise ValueError(f"inconsistent triple: H0 {self.h0.shape}, HA {self.ha.shape}, HB {self.hb.shape}")

    @property
    def n_ris(self) -> int:
        return self.ha.shape[0]


def compose(t: ChannelTriple, c: RISControl) -> ChannelMatrix:
    """H = H0 + HB diag(mu) HA, scaling the columns of HB instead of forming diag(mu)."""
    if len(c) != t.n_ris:
        raise ValueError(f"{len(c)} RIS coefficients for {t.n_ris} elements")
    h = t.h0.h + (t.hb.h * c.mu) @ t.ha.h
    return ChannelMatrix(h, link="H", model=t.h0.model, drop=t.h0.drop)


def rcs(p: ElementPattern, lam: float, inc: tuple, refl: tuple) -> float:
    """Radar cross-section of one a x b element for incidence/reflection (phi, theta)."""
    if not p.has_dims:
        raise ValueError("element pattern has no plate dimensions a, b")
    if lam <= 0:
        raise ValueError("wavelength must be positive")
    peak = 4 * np.pi * (p.a * p.b / lam) ** 2
    return peak * pattern_gain(p, *inc) * pattern_gain(p, *refl)


def radar_link_budget(p_tx, g_tx, g_rx, sigma, lam, r_ti, r_ir):
    """Received power through a single scatterer (the bistatic radar equation)."""
    if r_ti <= 0 or r_ir <= 0:
        raise ValueError("distances must be positive")
    return p_tx * g_tx * g_rx * sigma * lam**2 / ((4 * np.pi) ** 3 * r_ti**2 * r_ir**2)


def apply_scattering_pattern(t: ChannelTriple, ris: ArraySpec, lam: float = None) -> ChannelTriple:
    """Fold the RIS element response into HA (incidence) and HB (reflection).

    Uses the LoS angles stored with each channel, so it is exact for LoS
    channels and an approximation for scattered ones. The amplitude
    sqrt(G*F) goes into each hop, giving the cascade G**2 * F_in * F_out.
    Plate-size gains need ``lam``.
    """
    p = ris.pattern
    if p.kind == "isotropic" and p.peak_gain(lam or 1.0) == 1.0:
        return t
    if t.ha.geometry is None or t.hb.geometry is None:
        raise ValueError("HA and HB need link geometry to apply a non-isotropic RIS pattern")
    if p.has_dims and lam is None:
        raise ValueError("wavelength required for plate-size element gain")
    lam = 1.0 if lam is None else lam
    ga, gb = t.ha.geometry, t.hb.geometry
    amp_in = amplitude_gain(p, ga.phi_a, ga.theta_a, lam)
    amp_out = amplitude_gain(p, gb.phi_d, gb.theta_d, lam)
    ha = ChannelMatrix(t.ha.h * amp_in, t.ha.link, t.ha.model, t.ha.drop, t.ha.geometry)
    hb = ChannelMatrix(t.hb.h * amp_out, t.hb.link, t.hb.model, t.hb.drop, t.hb.geometry)
    return ChannelTriple(t.h0, ha, hb)
