"""Simplified 3GPP UMa geometry-based stochastic channel generator.

One call chain per link and drop::

    lss = draw_large_scale(scenario, geo, rng)
    clusters = generate_clusters(lss, geo, scenario, rng)
    H = assemble_channel(clusters, lss, geo, tx, rx, lam)

Large-scale parameters are drawn independently (no cross-correlation) and
every drop is an independent snapshot at a single frequency, so cluster
delays only shape the power delay profile.
"""

import dataclasses
import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .geometry import ArraySpec, LinkGeometry, amplitude_gain, los_response, steering_vector
from .units import SPEED_OF_LIGHT, db2amp, db2pow

SCENARIOS = ("UMa-LoS", "UMa-NLoS")

# The "-100 dB" standard deviation used to switch a large-scale parameter
# off, read as a linear magnitude.
SUPPRESSED_STD = 10 ** (-100 / 10)

_D2D_RANGE = (10.0, 5000.0)
_H_E = 1.0  # effective environment height for the UMa breakpoint


class ValidityError(ValueError):
    """Raised when a link lies outside the pathloss model's validity range."""

    def __init__(self, message, bound):
        super().__init__(message)
        self.bound = bound


@dataclass(frozen=True)
class ChannelMatrix:
    """Complex narrowband channel, shape (receive elements, transmit elements)."""

    h: np.ndarray
    link: str = ""
    model: str = ""
    drop: int = None
    geometry: LinkGeometry = None

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        if h.ndim != 2:
            raise ValueError("channel matrix must be 2-D")
        if not np.all(np.isfinite(h)):
            raise ValueError(f"non-finite channel entries (link {self.link!r}, drop {self.drop})")
        object.__setattr__(self, "h", h)

    @property
    def shape(self):
        return self.h.shape

    def __array__(self, dtype=None, copy=None):
        return self.h if dtype is None else self.h.astype(dtype)


@dataclass(frozen=True)
class ScenarioParams:
    """Statistics of one scenario at a given carrier frequency.

    Log-normal parameters are (mean, std) of log10(spread); DS in seconds,
    angular spreads in degrees. ``lgzsd_mu`` keeps the distance-dependent
    coefficients (c_d2d, c_hut, offset, floor) since the ZSD mean depends on
    the link.
    """

    scenario: str
    fc: float
    sf_sigma_db: float
    k_mu_db: float
    k_sigma_db: float
    lgds: tuple
    lgasd: tuple
    lgasa: tuple
    lgzsa: tuple
    lgzsd_mu: tuple
    lgzsd_sigma: float
    n_clusters: int
    rays_per_cluster: int
    zeta_db: float
    r_tau: float
    c_asd_deg: float
    c_asa_deg: float
    c_zsa_deg: float
    max_as_deg: float = 104.0
    max_zs_deg: float = 52.0
    ray_offsets: tuple = (0.0447, 0.1413, 0.2492, 0.3715, 0.5129,
                          0.6797, 0.8844, 1.1481, 1.5195, 2.1551)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.fc <= 0:
            raise ValueError("carrier frequency must be positive")
        stds = [self.sf_sigma_db, self.k_sigma_db, self.lgds[1], self.lgasd[1], self.lgasa[1],
                self.lgzsa[1], self.lgzsd_sigma, self.zeta_db]
        if min(stds) < 0:
            raise ValueError("standard deviations must be >= 0")
        if self.n_clusters < 1 or self.rays_per_cluster < 1:
            raise ValueError("need at least one cluster and one ray")
        if self.rays_per_cluster > 2 * len(self.ray_offsets):
            raise ValueError(f"at most {2 * len(self.ray_offsets)} rays per cluster supported")

    def lgzsd(self, d2d: float, h_ut: float) -> tuple:
        c_d, c_h, offset, floor = self.lgzsd_mu
        return max(floor, c_d * d2d / 1000 + c_h * (h_ut - 1.5) + offset), self.lgzsd_sigma

    def suppressed(self, sf: bool = False, k: bool = False) -> "ScenarioParams":
        """Copy with shadow fading and/or K-factor variance switched off."""
        changes = {}
        if sf:
            changes["sf_sigma_db"] = SUPPRESSED_STD
        if k:
            changes["k_sigma_db"] = SUPPRESSED_STD
        return dataclasses.replace(self, **changes)


def load_table(path=None) -> dict:
    if path is None:
        text = resources.files("rissim").joinpath("data/uma_38901.json").read_text()
    else:
        with open(path) as f:
            text = f.read()
    table = json.loads(text)
    if table.get("schema_version") != 1:
        raise ValueError(f"unsupported scenario table version {table.get('schema_version')!r}")
    return table


def load_scenario(name: str, fc: float = 2e9, path=None) -> ScenarioParams:
    """Build ScenarioParams for ``name`` at carrier ``fc`` (Hz) from the shipped table."""
    table = load_table(path)
    try:
        row = table["scenarios"][name]
    except KeyError:
        raise ValueError(f"scenario {name!r} not in table; have {sorted(table['scenarios'])}") from None
    lf = np.log10(max(fc / 1e9, row["lsp_min_fc_ghz"]))

    def lognormal(key):
        a, b = row[f"lg{key}_mu"]
        return (a + b * lf, row[f"lg{key}_sigma"])

    return ScenarioParams(
        scenario=name,
        fc=fc,
        sf_sigma_db=row["sf_sigma_db"],
        k_mu_db=row["k_mu_db"],
        k_sigma_db=row["k_sigma_db"],
        lgds=lognormal("DS"),
        lgasd=lognormal("ASD"),
        lgasa=lognormal("ASA"),
        lgzsa=lognormal("ZSA"),
        lgzsd_mu=tuple(row["lgZSD_mu"]),
        lgzsd_sigma=row["lgZSD_sigma"],
        n_clusters=row["n_clusters"],
        rays_per_cluster=row["rays_per_cluster"],
        zeta_db=row["zeta_db"],
        r_tau=row["r_tau"],
        c_asd_deg=row["c_asd_deg"],
        c_asa_deg=row["c_asa_deg"],
        c_zsa_deg=row["c_zsa_deg"],
        max_as_deg=row["max_as_deg"],
        max_zs_deg=row["max_zs_deg"],
        ray_offsets=tuple(table["ray_offsets"]),
    )


def uma_los_pathloss(d2d, d3d, fc, h_bs, h_ut):
    """Two-slope UMa LoS pathloss in dB (fc in Hz)."""
    d_bp = 4 * (h_bs - _H_E) * (h_ut - _H_E) * fc / SPEED_OF_LIGHT
    f_ghz = fc / 1e9
    pl1 = 28.0 + 22.0 * np.log10(d3d) + 20.0 * np.log10(f_ghz)
    pl2 = (28.0 + 40.0 * np.log10(d3d) + 20.0 * np.log10(f_ghz)
           - 9.0 * np.log10(d_bp**2 + (h_bs - h_ut) ** 2))
    return np.where(d2d <= d_bp, pl1, pl2)


def uma_nlos_pathloss(d2d, d3d, fc, h_bs, h_ut):
    pl_nlos = 13.54 + 39.08 * np.log10(d3d) + 20.0 * np.log10(fc / 1e9) - 0.6 * (h_ut - 1.5)
    return np.maximum(uma_los_pathloss(d2d, d3d, fc, h_bs, h_ut), pl_nlos)


def pathloss(scenario: ScenarioParams, geo: LinkGeometry, h_tx: float = None, h_rx: float = None) -> float:
    """Mean UMa pathloss in dB for the link.

    Heights default to the ones recorded in ``geo``. Only the 2-D distance
    range and the breakpoint requirement h > 1 m are enforced; the UMa
    terminal-height range is not, because a RIS is typically mounted higher
    than a handset.
    """
    h_tx = geo.h_tx if h_tx is None else h_tx
    h_rx = geo.h_rx if h_rx is None else h_rx
    lo, hi = _D2D_RANGE
    if not lo <= geo.d2d <= hi:
        bound = lo if geo.d2d < lo else hi
        raise ValidityError(f"d2D = {geo.d2d:.3f} m outside UMa validity [{lo}, {hi}] m", bound)
    if h_tx is None or h_rx is None:
        raise ValueError("antenna heights are required")
    if min(h_tx, h_rx) <= _H_E:
        raise ValidityError(f"antenna heights must exceed {_H_E} m", _H_E)
    fn = uma_los_pathloss if scenario.scenario == "UMa-LoS" else uma_nlos_pathloss
    return float(fn(geo.d2d, geo.d3d, scenario.fc, h_tx, h_rx))


@dataclass(frozen=True)
class LargeScaleSample:
    """One realization of the large-scale parameters.

    ``beta_db`` is pathloss plus shadow fading. DS is in seconds, the four
    angular spreads in degrees.
    """

    pathloss_db: float
    sf_db: float
    k_db: float
    ds: float
    asd: float
    asa: float
    zsd: float
    zsa: float

    @property
    def beta_db(self) -> float:
        return self.pathloss_db + self.sf_db


def draw_large_scale(scenario: ScenarioParams, geo: LinkGeometry, rng: np.random.Generator) -> LargeScaleSample:
    pl = pathloss(scenario, geo)
    sf = rng.normal(0.0, scenario.sf_sigma_db)
    k = rng.normal(scenario.k_mu_db, scenario.k_sigma_db)

    def lognormal(params, cap=np.inf):
        mu, sigma = params
        return min(10 ** rng.normal(mu, sigma), cap)

    ds = lognormal(scenario.lgds)
    asd = lognormal(scenario.lgasd, scenario.max_as_deg)
    asa = lognormal(scenario.lgasa, scenario.max_as_deg)
    zsd = lognormal(scenario.lgzsd(geo.d2d, geo.h_rx), scenario.max_zs_deg)
    zsa = lognormal(scenario.lgzsa, scenario.max_zs_deg)
    return LargeScaleSample(pl, float(sf), float(k), ds, asd, asa, zsd, zsa)


def _wrap_azimuth(phi):
    return (np.asarray(phi) + np.pi) % (2 * np.pi) - np.pi


def _fold_elevation(theta):
    # reflect into [0, pi]
    t = np.mod(theta, 2 * np.pi)
    return np.where(t > np.pi, 2 * np.pi - t, t)


@dataclass(frozen=True)
class ClusterSet:
    """Clusters and rays of one drop.

    Cluster-level arrays have shape (N,); ray offsets and phases (N, M).
    Angles are in radians, in the local frames of the respective arrays.
    """

    delays: np.ndarray
    powers: np.ndarray
    aod: np.ndarray
    zod: np.ndarray
    aoa: np.ndarray
    zoa: np.ndarray
    aod_offsets: np.ndarray
    zod_offsets: np.ndarray
    aoa_offsets: np.ndarray
    zoa_offsets: np.ndarray
    phases: np.ndarray

    @property
    def n_clusters(self):
        return self.powers.size

    @property
    def n_rays(self):
        return self.phases.shape[1]

    def ray_angles(self):
        """Absolute ray angles (aod, zod, aoa, zoa), each of shape (N, M)."""
        aod = _wrap_azimuth(self.aod[:, None] + self.aod_offsets)
        aoa = _wrap_azimuth(self.aoa[:, None] + self.aoa_offsets)
        zod = _fold_elevation(self.zod[:, None] + self.zod_offsets)
        zoa = _fold_elevation(self.zoa[:, None] + self.zoa_offsets)
        return aod, zod, aoa, zoa


def _offset_basis(scenario: ScenarioParams) -> np.ndarray:
    m = scenario.rays_per_cluster
    if m == 1:
        return np.zeros(1)
    basis = np.ravel([(a, -a) for a in scenario.ray_offsets])
    return basis[:m]


def generate_clusters(lss: LargeScaleSample, geo: LinkGeometry, scenario: ScenarioParams,
                      rng: np.random.Generator) -> ClusterSet:
    n = scenario.n_clusters
    m = scenario.rays_per_cluster

    tau = -scenario.r_tau * lss.ds * np.log(1.0 - rng.uniform(size=n))
    tau = np.sort(tau - tau.min())
    z = rng.normal(0.0, scenario.zeta_db, size=n)
    p = np.exp(-tau * (scenario.r_tau - 1) / (scenario.r_tau * lss.ds)) * 10 ** (-z / 10)
    p = p / p.sum()

    deg = np.pi / 180
    aod = _wrap_azimuth(geo.phi_d + rng.normal(0.0, lss.asd, size=n) * deg)
    zod = _fold_elevation(geo.theta_d + rng.normal(0.0, lss.zsd, size=n) * deg)
    aoa = _wrap_azimuth(geo.phi_a + rng.normal(0.0, lss.asa, size=n) * deg)
    zoa = _fold_elevation(geo.theta_a + rng.normal(0.0, lss.zsa, size=n) * deg)

    basis = _offset_basis(scenario)
    mu_lgzsd, _ = scenario.lgzsd(geo.d2d, geo.h_rx)
    spreads = {
        "aod": scenario.c_asd_deg,
        "zod": 3 / 8 * 10**mu_lgzsd,
        "aoa": scenario.c_asa_deg,
        "zoa": scenario.c_zsa_deg,
    }
    # random coupling of rays: independent permutation per cluster and angle
    offsets = {}
    for key, c in spreads.items():
        perm = rng.permuted(np.tile(basis, (n, 1)), axis=1)
        offsets[key] = perm * c * deg
    phases = rng.uniform(-np.pi, np.pi, size=(n, m))

    return ClusterSet(tau, p, aod, zod, aoa, zoa, offsets["aod"], offsets["zod"],
                      offsets["aoa"], offsets["zoa"], phases)


def rician_weights(k_db: float) -> tuple:
    if np.isposinf(k_db):
        return 1.0, 0.0
    k = db2pow(k_db)
    return float(np.sqrt(k / (k + 1))), float(np.sqrt(1 / (k + 1)))


def assemble_channel(clusters: ClusterSet, lss: LargeScaleSample, geo: LinkGeometry,
                     tx: ArraySpec, rx: ArraySpec, lam: float, **meta) -> ChannelMatrix:
    """Sum the LoS ray and all cluster rays into an (N_rx, N_tx) matrix.

    Element patterns enter as amplitude sqrt(G*F) at every ray's angles. The
    whole matrix is scaled by beta_lin = 10**(-beta/20).
    """
    w_los, w_nlos = rician_weights(lss.k_db)
    aod, zod, aoa, zoa = (x.ravel() for x in clusters.ray_angles())
    m = clusters.n_rays
    amp = np.repeat(np.sqrt(clusters.powers / m), m) * np.exp(1j * clusters.phases.ravel())
    amp = amp * amplitude_gain(rx.pattern, aoa, zoa, lam) * amplitude_gain(tx.pattern, aod, zod, lam)

    a_rx = steering_vector(rx, aoa, zoa, lam)
    a_tx = steering_vector(tx, aod, zod, lam)
    if a_rx.shape[1] != amp.size or a_tx.shape[1] != amp.size:
        raise ValueError("ray count mismatch between clusters and steering vectors")
    h = w_nlos * (a_rx * amp) @ a_tx.T
    if w_los:
        h = h + w_los * los_response(geo, tx, rx, lam)
    return ChannelMatrix(db2amp(-lss.beta_db) * h, geometry=geo, **meta)


def gbsm_channel(scenario: ScenarioParams, geo: LinkGeometry, tx: ArraySpec, rx: ArraySpec,
                 lam: float, rng: np.random.Generator, **meta) -> ChannelMatrix:
    """Draw large-scale parameters and clusters, then assemble one channel."""
    lss = draw_large_scale(scenario, geo, rng)
    clusters = generate_clusters(lss, geo, scenario, rng)
    meta.setdefault("model", scenario.scenario)
    return assemble_channel(clusters, lss, geo, tx, rx, lam, **meta)
