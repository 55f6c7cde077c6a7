"""Monte-Carlo harness: config, per-drop evaluation, CDF aggregation and output.

RNG contract
------------
Every channel of every drop gets its own generator::

    np.random.default_rng(np.random.SeedSequence([seed, drop, LINK_CODES[link]]))

SeedSequence hashes the three integers into the generator state, so a drop's
channels depend only on (seed, drop, link) and never on the schedule.
"""

import dataclasses
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import __version__
from .cascade import ChannelTriple
from .gbsm import SCENARIOS, ChannelMatrix, gbsm_channel, load_scenario, pathloss
from .geometry import ArraySpec, ElementPattern, Orientation, link_geometry
from .precoding import LinkBudget, OptimizerOptions, optimize_bs, optimize_ris
from .rician import RicianParams, eigenvalues_db, rician_channel
from .units import dbm2watt, wavelength

log = logging.getLogger(__name__)

LINKS = ("H0", "HA", "HB")
LINK_CODES = {"H0": 0, "HA": 1, "HB": 2}
# transmitter and receiver site of each link
LINK_ENDS = {"H0": ("bs", "ue"), "HA": ("bs", "ris"), "HB": ("ris", "ue")}
SITES = ("bs", "ris", "ue")
MODELS = ("rician", "gbsm", "zero")
PERCENTILES = (10, 50, 90)


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    return f"{float(x):.9g}"


def _round9(x) -> float:
    return float(_fmt(x))


# ---------------------------------------------------------------- config ---

@dataclass(frozen=True)
class PatternConfig:
    kind: str = "isotropic"
    alpha: float = 0.0
    a: float = None
    b: float = None
    max_gain: float = 1.0
    azimuths_deg: tuple = None
    elevations_deg: tuple = None
    values: tuple = None

    def build(self) -> ElementPattern:
        az = el = None
        if self.azimuths_deg is not None:
            az = tuple(np.deg2rad(self.azimuths_deg))
        if self.elevations_deg is not None:
            el = tuple(np.deg2rad(self.elevations_deg))
        return ElementPattern(self.kind, self.alpha, az, el, self.values, self.a, self.b, self.max_gain)


@dataclass(frozen=True)
class ArrayConfig:
    """``boresight`` is a global vector or the name of a site to face."""

    rows: int
    cols: int
    spacing: float = 0.5
    boresight: object = (1.0, 0.0, 0.0)
    up: tuple = (0.0, 0.0, 1.0)
    pattern: PatternConfig = field(default_factory=PatternConfig)


@dataclass(frozen=True)
class LinkConfig:
    """Channel model of one link.

    ``rician`` needs ``k_db`` and a ``scenario`` whose mean pathloss sets
    beta (or an explicit ``beta_db``); ``gbsm`` needs ``scenario``; ``zero``
    disconnects the link.
    """

    model: str
    scenario: str = None
    k_db: float = None
    beta_db: float = None


@dataclass(frozen=True)
class AblationConfig:
    suppress_sf: bool = False
    suppress_k_std: bool = False


@dataclass(frozen=True)
class OptimizerConfig:
    grid_size: int = 64
    max_iterations: int = 20
    tolerance: float = 1e-4

    def options(self) -> OptimizerOptions:
        return OptimizerOptions(self.grid_size, self.max_iterations, self.tolerance)


def _default_sites():
    return {"bs": (0.0, 0.0, 25.0), "ris": (200.0, 50.0, 25.0), "ue": (250.0, 0.0, 1.5)}


def _default_arrays():
    return {
        "bs": ArrayConfig(4, 4, boresight="ris"),
        "ris": ArrayConfig(45, 45, boresight=(0.0, -1.0, 0.0)),
        "ue": ArrayConfig(1, 4, boresight="bs"),
    }


def _default_links():
    return {
        "H0": LinkConfig("rician", "UMa-NLoS", k_db=-100.0),
        "HA": LinkConfig("rician", "UMa-LoS", k_db=9.0),
        "HB": LinkConfig("rician", "UMa-LoS", k_db=9.0),
    }


@dataclass(frozen=True)
class RunConfig:
    """Complete description of a campaign.

    Units: Hz, dBm, dBm/Hz, dB, meters. Array spacing is in wavelengths and
    tabulated pattern angles in degrees.
    """

    name: str = "ris-uma"
    carrier_frequency_hz: float = 2e9
    bandwidth_hz: float = 1.4e6
    subcarrier_spacing_hz: float = 15e3
    bs_power_dbm: float = 30.0
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 9.0
    sites: dict = field(default_factory=_default_sites)
    arrays: dict = field(default_factory=_default_arrays)
    links: dict = field(default_factory=_default_links)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    drops: int = 500
    seed: int = 0
    output: str = "results"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    compute_rates: bool = True

    def __post_init__(self):
        # freeze the mappings so configs hash (scene cache) and pickle cleanly
        for name in ("sites", "arrays", "links"):
            v = getattr(self, name)
            if isinstance(v, dict):
                object.__setattr__(self, name, tuple(sorted(v.items())))
        validate(self)

    def site(self, name) -> np.ndarray:
        return np.asarray(dict(self.sites)[name], dtype=float)

    def array(self, name) -> ArrayConfig:
        return dict(self.arrays)[name]

    def link(self, name) -> LinkConfig:
        return dict(self.links)[name]

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @property
    def n_subcarriers(self) -> int:
        return int(math.floor(self.bandwidth_hz / self.subcarrier_spacing_hz + 1e-9))

    @property
    def model_label(self) -> str:
        kinds = sorted({self.link(k).model for k in LINKS} - {"zero"})
        return kinds[0] if len(kinds) == 1 else "mixed" if kinds else "zero"

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for name in ("sites", "arrays", "links"):
            d[name] = {k: v for k, v in d[name]}
        for arr in d["arrays"].values():
            for key in ("boresight", "up"):
                if not isinstance(arr[key], str):
                    arr[key] = list(arr[key])
            arr["pattern"] = {k: v for k, v in arr["pattern"].items() if v is not None}
        d["sites"] = {k: list(v) for k, v in d["sites"].items()}
        d["links"] = {k: {kk: vv for kk, vv in v.items() if vv is not None} for k, v in d["links"].items()}
        return d


def validate(cfg: RunConfig):
    """Check a RunConfig; raises ConfigError naming the offending field."""
    if int(cfg.drops) != cfg.drops or cfg.drops < 1:
        raise ConfigError("drops must be an integer >= 1")
    if int(cfg.seed) != cfg.seed or cfg.seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    for key in ("carrier_frequency_hz", "bandwidth_hz", "subcarrier_spacing_hz"):
        if not getattr(cfg, key) > 0:
            raise ConfigError(f"{key} must be positive")
    if cfg.n_subcarriers < 1:
        raise ConfigError("bandwidth must hold at least one subcarrier")
    sites = dict(cfg.sites)
    if set(sites) != set(SITES):
        raise ConfigError(f"sites must be exactly {SITES}, got {sorted(sites)}")
    for k, v in sites.items():
        if len(v) != 3 or not all(np.isfinite(v)):
            raise ConfigError(f"sites.{k} must be a finite 3-vector")
    arrays = dict(cfg.arrays)
    if set(arrays) != set(SITES):
        raise ConfigError(f"arrays must be exactly {SITES}, got {sorted(arrays)}")
    for k, a in arrays.items():
        if isinstance(a.boresight, str) and (a.boresight not in SITES or a.boresight == k):
            raise ConfigError(f"arrays.{k}.boresight must name another site or be a vector")
    links = dict(cfg.links)
    if set(links) != set(LINKS):
        raise ConfigError(f"links must be exactly {LINKS}, got {sorted(links)}")
    for k, lk in links.items():
        if lk.model not in MODELS:
            raise ConfigError(f"links.{k}.model must be one of {MODELS}")
        if lk.model == "zero":
            continue
        if lk.scenario not in SCENARIOS and not (lk.model == "rician" and lk.beta_db is not None):
            raise ConfigError(f"links.{k}.scenario must be one of {SCENARIOS}")
        if lk.model == "rician" and lk.k_db is None:
            raise ConfigError(f"links.{k}.k_db is required for the rician model")
        if lk.model == "gbsm" and (lk.k_db is not None or lk.beta_db is not None):
            raise ConfigError(f"links.{k}: k_db and beta_db only apply to the rician model")
    try:
        cfg.optimizer.options()
        for a in arrays.values():
            a.pattern.build()
    except ValueError as e:
        raise ConfigError(str(e)) from None
    _build_scene(cfg)  # geometry and pathloss validity


def _strict(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return data


def _tuple(v, where):
    if not isinstance(v, (list, tuple)):
        raise ConfigError(f"{where} must be a list")
    return tuple(_tuple(x, where) if isinstance(x, (list, tuple)) else float(x) for x in v)


def config_from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from parsed JSON. Unknown keys are errors."""
    data = dict(_strict(RunConfig, data, "config"))
    if "sites" in data:
        if not isinstance(data["sites"], dict):
            raise ConfigError("sites must be an object")
        sites = {}
        for k, v in data["sites"].items():
            if k not in SITES:
                raise ConfigError(f"unknown site {k!r}")
            sites[k] = _tuple(v, f"sites.{k}")
        data["sites"] = {**_default_sites(), **sites}
    if "arrays" in data:
        arrays = dict(_default_arrays())
        for k, v in data["arrays"].items():
            if k not in SITES:
                raise ConfigError(f"unknown array {k!r}")
            v = dict(_strict(ArrayConfig, v, f"arrays.{k}"))
            if "pattern" in v:
                p = dict(_strict(PatternConfig, v["pattern"], f"arrays.{k}.pattern"))
                for key in ("azimuths_deg", "elevations_deg", "values"):
                    if key in p:
                        p[key] = _tuple(p[key], f"arrays.{k}.pattern.{key}")
                v["pattern"] = PatternConfig(**p)
            for key in ("boresight", "up"):
                if key in v and not isinstance(v[key], str):
                    v[key] = _tuple(v[key], f"arrays.{k}.{key}")
            try:
                arrays[k] = ArrayConfig(**v)
            except TypeError as e:
                raise ConfigError(f"arrays.{k}: {e}") from None
        data["arrays"] = arrays
    if "links" in data:
        links = dict(_default_links())
        for k, v in data["links"].items():
            if k not in LINKS:
                raise ConfigError(f"unknown link {k!r}")
            v = _strict(LinkConfig, v, f"links.{k}")
            try:
                links[k] = LinkConfig(**v)
            except TypeError as e:
                raise ConfigError(f"links.{k}: {e}") from None
        data["links"] = links
    if "ablation" in data:
        data["ablation"] = AblationConfig(**_strict(AblationConfig, data["ablation"], "ablation"))
    if "optimizer" in data:
        data["optimizer"] = OptimizerConfig(**_strict(OptimizerConfig, data["optimizer"], "optimizer"))
    return RunConfig(**data)


def load_config(path) -> RunConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from None
    return config_from_dict(data)


def gbsm_config(**changes) -> RunConfig:
    """Same layout as the default config with GBSM channels on every link."""
    links = {
        "H0": LinkConfig("gbsm", "UMa-NLoS"),
        "HA": LinkConfig("gbsm", "UMa-LoS"),
        "HB": LinkConfig("gbsm", "UMa-LoS"),
    }
    return RunConfig(**{"name": "ris-uma-gbsm", "links": links, **changes})


# -------------------------------------------------------------- budget ----

def derive_link_budget(cfg: RunConfig) -> LinkBudget:
    """Per-subcarrier transmit power and per-subcarrier noise power.

    The number of subcarriers is floor(bandwidth / spacing).
    """
    n = cfg.n_subcarriers
    if n < 1:
        raise ValueError("non-positive number of subcarriers")
    p_dbm = cfg.bs_power_dbm - 10 * np.log10(n)
    noise_dbm = cfg.noise_psd_dbm_hz + 10 * np.log10(cfg.subcarrier_spacing_hz) + cfg.noise_figure_db
    return LinkBudget(float(dbm2watt(p_dbm)), float(dbm2watt(noise_dbm)))


# --------------------------------------------------------------- drops ----

@dataclass(frozen=True)
class _Scene:
    lam: float
    arrays: dict
    geometry: dict
    models: dict  # link -> ("rician", RicianParams) | ("gbsm", ScenarioParams) | ("zero", None)


def _orientation(cfg: RunConfig, name: str) -> Orientation:
    a = cfg.array(name)
    if isinstance(a.boresight, str):
        return Orientation.facing(cfg.site(a.boresight) - cfg.site(name), a.up)
    return Orientation(tuple(a.boresight), tuple(a.up))


@lru_cache(maxsize=8)
def _build_scene(cfg: RunConfig) -> _Scene:
    lam = wavelength(cfg.carrier_frequency_hz)
    try:
        arrays = {}
        for s in SITES:
            a = cfg.array(s)
            arrays[s] = ArraySpec(a.rows, a.cols, a.spacing, _orientation(cfg, s), a.pattern.build())
        geometry = {}
        models = {}
        for link, (t, r) in LINK_ENDS.items():
            geo = link_geometry(cfg.site(t), arrays[t].orientation, cfg.site(r), arrays[r].orientation)
            geometry[link] = geo
            lk = cfg.link(link)
            if lk.model == "zero":
                models[link] = ("zero", None)
                continue
            if lk.model == "gbsm":
                sc = load_scenario(lk.scenario, cfg.carrier_frequency_hz)
                sc = sc.suppressed(sf=cfg.ablation.suppress_sf, k=cfg.ablation.suppress_k_std)
                models[link] = ("gbsm", sc)
            else:
                beta = lk.beta_db
                if beta is None:
                    beta = pathloss(load_scenario(lk.scenario, cfg.carrier_frequency_hz), geo)
                models[link] = ("rician", RicianParams(float(lk.k_db), float(beta), lam))
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return _Scene(lam, arrays, geometry, models)


def link_rng(seed: int, drop: int, link: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(drop), LINK_CODES[link]]))


def draw_channel(cfg: RunConfig, drop: int, link: str) -> ChannelMatrix:
    """Channel of one link in one drop, from its own RNG stream."""
    scene = _build_scene(cfg)
    t, r = LINK_ENDS[link]
    tx, rx = scene.arrays[t], scene.arrays[r]
    geo = scene.geometry[link]
    kind, params = scene.models[link]
    meta = {"link": link, "drop": drop, "model": kind}
    if kind == "zero":
        return ChannelMatrix(np.zeros((rx.size, tx.size), dtype=complex), geometry=geo, **meta)
    rng = link_rng(cfg.seed, drop, link)
    if kind == "gbsm":
        return gbsm_channel(params, geo, tx, rx, scene.lam, rng, **meta)
    return rician_channel(params, geo, tx, rx, rng, **meta)


@dataclass(frozen=True)
class DropResult:
    drop: int
    eig_h0: tuple
    eig_ha: tuple
    eig_hb: tuple
    rate_without: float = float("nan")
    rate_with: float = float("nan")
    iterations: int = 0

    def eig(self, link) -> tuple:
        return getattr(self, "eig_" + link.lower())


def run_drop(cfg: RunConfig, drop: int) -> DropResult:
    if not 0 <= drop < cfg.drops:
        raise IndexError(f"drop {drop} outside 0..{cfg.drops - 1}")
    try:
        chans = {link: draw_channel(cfg, drop, link) for link in LINKS}
        eig = {link: tuple(float(x) for x in eigenvalues_db(chans[link].h)) for link in LINKS}
        if not cfg.compute_rates:
            return DropResult(drop, eig["H0"], eig["HA"], eig["HB"])
        budget = derive_link_budget(cfg)
        base = optimize_bs(chans["H0"].h, budget)
        triple = ChannelTriple(chans["H0"], chans["HA"], chans["HB"])
        _, best = optimize_ris(triple, budget, opts=cfg.optimizer.options())
    except Exception as e:
        raise RuntimeError(f"drop {drop}: {type(e).__name__}: {e}") from e
    if best.rate < base.rate - 1e-9:
        log.warning("drop %d: optimized RIS rate %.6g below no-RIS rate %.6g", drop, best.rate, base.rate)
    return DropResult(drop, eig["H0"], eig["HA"], eig["HB"], base.rate, best.rate, best.iterations)


# ------------------------------------------------------------ campaign ----

@dataclass(frozen=True)
class CdfSeries:
    """Empirical CDF: sorted samples with probabilities k/N."""

    name: str
    values: np.ndarray
    cdf: np.ndarray = None

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).reshape(-1))
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "cdf", np.arange(1, v.size + 1) / v.size)

    @classmethod
    def from_samples(cls, name, samples) -> "CdfSeries":
        return cls(name, samples)

    def percentile(self, q) -> float:
        return float(np.percentile(self.values, q))

    @property
    def interdecile(self) -> float:
        return self.percentile(90) - self.percentile(10)


@dataclass
class CampaignResult:
    config: RunConfig
    drops: list
    series: dict
    summary: dict


def _series_from_drops(cfg: RunConfig, drops) -> dict:
    out = {}
    for link in LINKS:
        label = cfg.link(link).model
        eig = np.array([d.eig(link) for d in drops])
        out[f"eig_{link}_{label}"] = CdfSeries(f"eig_{link}_{label}", eig[:, 0])
        if eig.shape[1] > 1:
            out[f"eig2_{link}_{label}"] = CdfSeries(f"eig2_{link}_{label}", eig[:, 1])
    if cfg.compute_rates:
        m = cfg.model_label
        out[f"rate_with_ris_{m}"] = CdfSeries(f"rate_with_ris_{m}", [d.rate_with for d in drops])
        out[f"rate_without_ris_{m}"] = CdfSeries(f"rate_without_ris_{m}", [d.rate_without for d in drops])
    return out


def summarize(cfg: RunConfig, drops, series: dict) -> dict:
    stats = {}
    for name, s in series.items():
        stats[name] = {
            "mean": _round9(np.mean(s.values)),
            "percentiles": {str(q): _round9(s.percentile(q)) for q in PERCENTILES},
            "interdecile": _round9(s.interdecile),
            "count": int(s.values.size),
        }
    gaps = {}
    for link in LINKS:
        eig = np.array([d.eig(link) for d in drops])
        if eig.shape[1] > 1:
            gaps[link] = _round9(np.mean(eig[:, 0] - eig[:, 1]))
    summary = {
        "name": cfg.name,
        "seed": int(cfg.seed),
        "drops": len(drops),
        "series": stats,
        "eigenvalue_gap_db": gaps,
        "software_version": __version__,
        "config": cfg.to_dict(),
    }
    if cfg.compute_rates:
        with_ = np.mean([d.rate_with for d in drops])
        without = np.mean([d.rate_without for d in drops])
        summary["rate_gain"] = _round9(with_ / without - 1) if without > 0 else None
        summary["mean_iterations"] = _round9(np.mean([d.iterations for d in drops]))
    return summary


def _run_chunk(args):
    cfg, idx = args
    return [run_drop(cfg, i) for i in idx]


def run_drops(cfg: RunConfig, workers: int = 1) -> list:
    """All DropResults in drop order, on ``workers`` processes."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    idx = list(range(cfg.drops))
    if workers == 1:
        results = [run_drop(cfg, i) for i in idx]
    else:
        chunks = [idx[k::workers * 4] for k in range(min(cfg.drops, workers * 4))]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = [r for part in ex.map(_run_chunk, [(cfg, c) for c in chunks]) for r in part]
        results.sort(key=lambda d: d.drop)
    if [d.drop for d in results] != idx:
        raise RuntimeError("missing or duplicated drops")
    return results


def run_campaign(cfg: RunConfig, workers: int = 1, out=None) -> CampaignResult:
    """Run every drop, aggregate CDFs and summary, and write them if ``out`` is given."""
    drops = run_drops(cfg, workers)
    series = _series_from_drops(cfg, drops)
    result = CampaignResult(cfg, drops, series, summarize(cfg, drops, series))
    if out is not None:
        emit_csv(series, out, result.summary)
    return result


def format_csv(s: CdfSeries) -> str:
    lines = ["value,cdf"]
    lines += [f"{_fmt(v)},{_fmt(p)}" for v, p in zip(s.values, s.cdf)]
    return "\n".join(lines) + "\n"


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_csv(series: dict, path, summary: dict = None) -> list:
    """Write one ``value,cdf`` CSV per series plus ``summary.json`` into directory ``path``.

    Each file is written to a temporary name first and renamed, so readers
    never see a partial file. Returns the written paths.
    """
    summary = {} if summary is None else summary
    written = []
    try:
        os.makedirs(path, exist_ok=True)
        texts = {f"{name}.csv": format_csv(s) for name, s in sorted(series.items())}
        texts["summary.json"] = json.dumps(summary, indent=2, sort_keys=True) + "\n"
        for fname, text in texts.items():
            p = os.path.join(path, fname)
            _atomic_write(p, text)
            written.append(p)
    except OSError as e:
        raise OSError(f"writing results to {path}: {e}") from e
    return written
