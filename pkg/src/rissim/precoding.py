"""Achievable rate, water-filling and joint BS / RIS optimization (perfect CSI)."""

from dataclasses import dataclass, field

import numpy as np

from .cascade import ChannelTriple, RISControl, compose
from .units import watt2dbm

# Phase changes must beat the current rate by this much (bit/s/Hz) to be
# accepted, so float noise never flips a coefficient.
_ACCEPT_EPS = 1e-12


@dataclass(frozen=True)
class LinkBudget:
    """Transmit power and noise power per considered subcarrier, in watts."""

    p_tx: float
    noise: float

    def __post_init__(self):
        if self.p_tx <= 0 or self.noise <= 0:
            raise ValueError("power and noise must be positive")

    @property
    def snr(self) -> float:
        return self.p_tx / self.noise

    @property
    def p_tx_dbm(self) -> float:
        return float(watt2dbm(self.p_tx))

    @property
    def noise_dbm(self) -> float:
        return float(watt2dbm(self.noise))


@dataclass
class PrecodeResult:
    covariance: np.ndarray
    powers: np.ndarray
    rate: float
    trace: list = field(default_factory=list)
    iterations: int = 0


def _check_covariance(cov: np.ndarray):
    scale = max(1.0, float(np.abs(np.trace(cov))))
    if np.max(np.abs(cov - cov.conj().T), initial=0.0) > 1e-9 * scale:
        raise ValueError("covariance is not Hermitian")
    if np.linalg.eigvalsh(cov).min() < -1e-9 * scale:
        raise ValueError("covariance is not positive semidefinite")


def achievable_rate(h, cov, noise: float) -> float:
    """log2 det(I + H cov H^H / noise) in bit/s/Hz."""
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    cov = np.atleast_2d(np.asarray(cov, dtype=complex))
    if cov.shape != (h.shape[1], h.shape[1]):
        raise ValueError(f"covariance {cov.shape} does not match channel {h.shape}")
    if noise <= 0:
        raise ValueError("noise power must be positive")
    _check_covariance(cov)
    m = np.eye(h.shape[0]) + (h @ cov @ h.conj().T) / noise
    sign, logdet = np.linalg.slogdet(m)
    return float(logdet / np.log(2))


def waterfill(gains, p_total: float, noise: float) -> np.ndarray:
    """Capacity-achieving powers p_i = max(0, nu - noise/g_i) with sum p_i = p_total.

    Streams are dropped from the weakest up until the water level stays
    above every remaining noise-to-gain level.
    """
    g = np.asarray(gains, dtype=float)
    if np.any(g < 0):
        raise ValueError("gains must be non-negative")
    if not np.any(g > 0):
        raise ValueError("at least one gain must be positive")
    order = np.argsort(g)[::-1]
    levels = np.full(g.size, np.inf)
    pos = g[order] > 0
    with np.errstate(over="ignore"):  # tiny gains give infinite levels, never active
        levels[pos] = noise / g[order][pos]
    n_active = int(pos.sum())
    while n_active > 0:
        nu = (p_total + levels[:n_active].sum()) / n_active
        if nu > levels[n_active - 1]:
            break
        n_active -= 1
    p_sorted = np.zeros(g.size)
    p_sorted[:n_active] = nu - levels[:n_active]
    p = np.zeros(g.size)
    p[order] = p_sorted
    return p


def optimize_bs(h, budget: LinkBudget) -> PrecodeResult:
    """Eigenbeamforming along the right singular vectors with water-filled powers."""
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    n_tx = h.shape[1]
    _, s, vh = np.linalg.svd(h, full_matrices=False)
    gains = s**2
    if not np.any(gains > 0):
        cov = np.eye(n_tx) * budget.p_tx / n_tx
        return PrecodeResult(cov, np.full(n_tx, budget.p_tx / n_tx), 0.0, [0.0])
    p = waterfill(gains, budget.p_tx, budget.noise)
    v = vh.conj().T
    cov = (v * p) @ v.conj().T
    cov = (cov + cov.conj().T) / 2
    rate = float(np.sum(np.log2(1 + p * gains / budget.noise)))
    return PrecodeResult(cov, p, rate, [rate])


@dataclass(frozen=True)
class OptimizerOptions:
    grid_size: int = 64
    max_iterations: int = 20
    tolerance: float = 1e-4

    def __post_init__(self):
        if self.grid_size < 2:
            raise ValueError("phase grid needs at least 2 points")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("need at least one iteration")


def candidate_rates(h, cov, noise, b, a, mu_i, candidates):
    """Rates after replacing one RIS coefficient ``mu_i`` by each candidate.

    ``b`` is the element's HB column, ``a`` its HA row. Evaluated from scratch;
    the sweep in :func:`optimize_ris` must agree with this.
    """
    out = []
    for c in np.atleast_1d(candidates):
        h_new = h + (c - mu_i) * np.outer(b, a)
        out.append(achievable_rate(h_new, cov, noise))
    return np.array(out)


def _sweep(h, ha, hb, mu, cov, noise, grid):
    """One ascending pass over the RIS elements with the BS covariance fixed.

    With F = H C and A0 = I + F H^H / noise, changing coefficient i by d adds
    a rank-2 term to A0, so each candidate's determinant ratio is a 2x2
    determinant of scalars computed once per element.
    """
    h = h.copy()
    mu = mu.copy()
    f = h @ cov
    a0 = np.eye(h.shape[0]) + f @ h.conj().T / noise
    a0_inv = np.linalg.inv(a0)
    ac = ha @ cov
    s = np.einsum("ij,ij->i", ac, ha.conj()).real
    log2 = np.log(2)
    for i in range(mu.size):
        b = hb[:, i]
        a = ha[i]
        u = f @ a.conj()
        ai_b = a0_inv @ b
        ai_u = a0_inv @ u
        g_bb = (b.conj() @ ai_b).real
        g_bu = b.conj() @ ai_u
        g_ub = np.conj(g_bu)
        g_uu = (u.conj() @ ai_u).real

        d = grid - mu[i]
        dd = d * d.conj() * s[i]
        x11 = (d * g_ub + dd * g_bb) / noise
        x12 = (d * g_uu + dd * g_bu) / noise
        x21 = d.conj() * g_bb / noise
        x22 = d.conj() * g_bu / noise
        ratio = ((1 + x11) * (1 + x22) - x12 * x21).real
        gain = np.log(np.maximum(ratio, 1e-300)) / log2
        k = int(np.argmax(gain))
        if gain[k] <= _ACCEPT_EPS:
            continue

        dk = d[k]
        # rank-2 update of A0 and its inverse through the same U W factors
        uw_u = np.column_stack([b, u])
        uw_w = np.vstack([dk * u.conj() + abs(dk) ** 2 * s[i] * b.conj(), np.conj(dk) * b.conj()]) / noise
        small = np.eye(2) + uw_w @ a0_inv @ uw_u
        a0_inv = a0_inv - (a0_inv @ uw_u) @ np.linalg.solve(small, uw_w @ a0_inv)
        h += dk * np.outer(b, a)
        f += dk * np.outer(b, ac[i])
        mu[i] = grid[k]
    return h, mu


def optimize_ris(t: ChannelTriple, budget: LinkBudget, init: RISControl = None,
                 opts: OptimizerOptions = None):
    """Alternate eigenbeamforming at the BS with per-element RIS phase search.

    Returns the final RISControl and the PrecodeResult of the last BS update.
    The rate trace holds the rate after every BS update and every sweep and
    never decreases.
    """
    opts = opts or OptimizerOptions()
    if init is None:
        init = RISControl.zero_phase(t.n_ris)
    if len(init) != t.n_ris:
        raise ValueError("initial RIS control has the wrong length")
    grid = np.exp(2j * np.pi * np.arange(opts.grid_size) / opts.grid_size)
    ha, hb = t.ha.h, t.hb.h
    mu = init.mu.copy()
    h = compose(t, init).h

    best = optimize_bs(h, budget)
    trace = [best.rate]
    it = 0
    for it in range(1, opts.max_iterations + 1):
        prev = trace[-1]
        h, mu = _sweep(h, ha, hb, mu, best.covariance, budget.noise, grid)
        # refresh from scratch so rounding in the rank-2 updates cannot accumulate
        h = compose(t, RISControl(mu)).h
        trace.append(achievable_rate(h, best.covariance, budget.noise))
        best = optimize_bs(h, budget)
        trace.append(best.rate)
        if trace[-1] - prev < opts.tolerance * max(abs(prev), np.finfo(float).tiny):
            break
    best.trace = trace
    best.iterations = it
    return RISControl(mu), best
