"""Array layouts, local frames, link angles and steering vectors.

Angle conventions
-----------------
Every array carries a local right-handed frame: x is the boresight, z the
``up`` vector and y = z cross x. Elements lie in the local y-z plane.

Directions are given by a local azimuth ``phi`` (from boresight towards +y,
in [-pi, pi)) and a local elevation ``theta`` measured from the local up
axis, in [0, pi]. theta = pi/2 with phi = 0 is broadside. For arrays whose
up vector is the global z axis (the default, wall-mounted case) theta is
exactly the global zenith angle and phi is the global azimuth minus the
boresight azimuth.
"""

from dataclasses import dataclass, field

import numpy as np

_ORTHO_TOL = 1e-9


def _as_vec3(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite coordinates {v}")
    return v


@dataclass(frozen=True)
class Orientation:
    """Boresight and up vectors of an array in the global frame."""

    boresight: tuple = (1.0, 0.0, 0.0)
    up: tuple = (0.0, 0.0, 1.0)
    rotation: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = _as_vec3(self.boresight)
        z = _as_vec3(self.up)
        if abs(np.linalg.norm(x) - 1) > _ORTHO_TOL or abs(np.linalg.norm(z) - 1) > _ORTHO_TOL:
            raise ValueError("boresight and up must be unit vectors")
        if abs(x @ z) > _ORTHO_TOL:
            raise ValueError("boresight and up must be orthogonal")
        y = np.cross(z, x)
        # columns are the local axes expressed in global coordinates
        object.__setattr__(self, "rotation", np.column_stack([x, y, z]))
        object.__setattr__(self, "boresight", tuple(x))
        object.__setattr__(self, "up", tuple(z))

    @classmethod
    def facing(cls, direction, up=(0.0, 0.0, 1.0)) -> "Orientation":
        """Orientation whose boresight is ``direction`` projected orthogonal to ``up``."""
        d = _as_vec3(direction)
        z = _as_vec3(up)
        z = z / np.linalg.norm(z)
        d = d - (d @ z) * z
        n = np.linalg.norm(d)
        if n == 0:
            raise ValueError("direction is parallel to the up vector")
        return cls(tuple(d / n), tuple(z))

    def to_local(self, v) -> np.ndarray:
        return self.rotation.T @ _as_vec3(v)


@dataclass(frozen=True)
class ElementPattern:
    """Normalized element power pattern F(phi, theta) in [0, 1].

    ``kind`` is one of ``"isotropic"``, ``"sine"`` (F = sin(theta)**alpha in
    the front hemisphere, 0 behind it) or ``"table"`` (bilinear
    interpolation over ``azimuths`` x ``elevations``). RIS elements may also
    carry their physical size ``a`` x ``b`` in meters.

    ``max_gain`` is the linear peak gain of the element. For a plate of size
    a x b it is 4*pi*a*b/lambda**2, see :meth:`peak_gain`.
    """

    kind: str = "isotropic"
    alpha: float = 0.0
    azimuths: tuple = None
    elevations: tuple = None
    values: tuple = None
    a: float = None
    b: float = None
    max_gain: float = 1.0

    def __post_init__(self):
        if self.kind not in ("isotropic", "sine", "table"):
            raise ValueError(f"unknown pattern kind {self.kind!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if (self.a is None) != (self.b is None):
            raise ValueError("give both plate dimensions a and b, or neither")
        if self.a is not None and (self.a <= 0 or self.b <= 0):
            raise ValueError("plate dimensions must be positive")
        if self.max_gain <= 0:
            raise ValueError("max_gain must be positive")
        if self.kind == "table":
            az = np.asarray(self.azimuths, dtype=float)
            el = np.asarray(self.elevations, dtype=float)
            vals = np.asarray(self.values, dtype=float)
            if vals.shape != (az.size, el.size):
                raise ValueError("values must have shape (len(azimuths), len(elevations))")
            if np.any(np.diff(az) <= 0) or np.any(np.diff(el) <= 0):
                raise ValueError("grid axes must be strictly increasing")
            if az[0] > -np.pi / 2 or az[-1] < np.pi / 2 or el[0] > 0 or el[-1] < np.pi:
                raise ValueError("tabulated pattern must cover the front hemisphere")
            if np.any(vals < 0) or np.any(vals > 1):
                raise ValueError("pattern values must lie in [0, 1]")
            object.__setattr__(self, "azimuths", tuple(az))
            object.__setattr__(self, "elevations", tuple(el))
            object.__setattr__(self, "values", tuple(map(tuple, vals)))

    @property
    def has_dims(self) -> bool:
        return self.a is not None

    def peak_gain(self, lam: float) -> float:
        if self.has_dims:
            return 4 * np.pi * self.a * self.b / lam**2
        return self.max_gain


def pattern_gain(p: ElementPattern, phi, theta):
    """Evaluate F(phi, theta). Broadcasts over array inputs."""
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if p.kind == "isotropic":
        return np.ones(np.broadcast(phi, theta).shape)
    front = np.cos(phi) >= 0
    if p.kind == "sine":
        in_range = (theta >= 0) & (theta <= np.pi)
        s = np.clip(np.sin(theta), 0.0, 1.0)
        return np.where(front & in_range, s**p.alpha, 0.0)

    az = np.asarray(p.azimuths)
    el = np.asarray(p.elevations)
    vals = np.asarray(p.values)
    phi, theta = np.broadcast_arrays(phi, theta)
    inside = (phi >= az[0]) & (phi <= az[-1]) & (theta >= el[0]) & (theta <= el[-1])
    if np.any(~inside & front):
        raise ValueError("pattern query outside the tabulated grid")
    i = np.clip(np.searchsorted(az, phi) - 1, 0, az.size - 2)
    j = np.clip(np.searchsorted(el, theta) - 1, 0, el.size - 2)
    tx = np.clip((phi - az[i]) / (az[i + 1] - az[i]), 0, 1)
    ty = np.clip((theta - el[j]) / (el[j + 1] - el[j]), 0, 1)
    out = (vals[i, j] * (1 - tx) * (1 - ty) + vals[i + 1, j] * tx * (1 - ty)
           + vals[i, j + 1] * (1 - tx) * ty + vals[i + 1, j + 1] * tx * ty)
    return np.where(inside, out, 0.0)


def amplitude_gain(p: ElementPattern, phi, theta, lam: float):
    """Field amplitude sqrt(G_max * F) applied to one end of a path."""
    return np.sqrt(p.peak_gain(lam) * pattern_gain(p, phi, theta))


@dataclass(frozen=True)
class ArraySpec:
    """Planar array: ``rows`` x ``cols`` elements, pitch ``spacing`` wavelengths.

    Elements are ordered row-major. A row runs along local y, so the column
    index sets the y coordinate and the row index the z coordinate.
    """

    rows: int
    cols: int
    spacing: float = 0.5
    orientation: Orientation = field(default_factory=Orientation)
    pattern: ElementPattern = field(default_factory=ElementPattern)

    def __post_init__(self):
        if int(self.rows) != self.rows or int(self.cols) != self.cols or self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be positive integers")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")

    @property
    def size(self) -> int:
        return self.rows * self.cols


def element_positions(spec: ArraySpec, lam: float) -> np.ndarray:
    """Local-frame element positions, shape (rows*cols, 3)."""
    if lam <= 0:
        raise ValueError("wavelength must be positive")
    d = spec.spacing * lam
    r, c = np.meshgrid(np.arange(spec.rows), np.arange(spec.cols), indexing="ij")
    y = (c.ravel() - (spec.cols - 1) / 2) * d
    z = (r.ravel() - (spec.rows - 1) / 2) * d
    return np.column_stack([np.zeros(spec.size), y, z])


def direction(phi, theta) -> np.ndarray:
    """Unit vectors for local angles; last axis has length 3."""
    phi, theta = np.broadcast_arrays(np.asarray(phi, dtype=float), np.asarray(theta, dtype=float))
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def angles_of(u) -> tuple:
    """(phi, theta) of a local direction vector; phi wrapped to [-pi, pi)."""
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u, axis=-1, keepdims=True)
    phi = np.arctan2(u[..., 1], u[..., 0])
    phi = np.where(phi >= np.pi, phi - 2 * np.pi, phi)
    theta = np.arccos(np.clip(u[..., 2], -1.0, 1.0))
    return phi, theta


def steering_vector(spec: ArraySpec, phi, theta, lam: float) -> np.ndarray:
    """Array response exp(+j*2*pi/lam*<p_m, u>).

    Scalar angles give a vector of length ``spec.size``; arrays of K angles
    give an (size, K) matrix, one column per direction.
    """
    pos = element_positions(spec, lam)
    u = direction(phi, theta)
    proj = pos @ np.moveaxis(u, -1, 0).reshape(3, -1)
    a = np.exp(1j * (2 * np.pi / lam) * proj)
    if np.ndim(phi) == 0 and np.ndim(theta) == 0:
        return a[:, 0]
    return a


@dataclass(frozen=True)
class LinkGeometry:
    """Line-of-sight geometry of one Tx->Rx pair.

    Departure angles point from the transmitter to the receiver in the
    transmitter frame; arrival angles point from the receiver back to the
    transmitter in the receiver frame.
    """

    d3d: float
    d2d: float
    phi_d: float
    theta_d: float
    phi_a: float
    theta_a: float
    h_tx: float = None
    h_rx: float = None


def link_geometry(tx_pos, tx_orient: Orientation, rx_pos, rx_orient: Orientation) -> LinkGeometry:
    tx = _as_vec3(tx_pos)
    rx = _as_vec3(rx_pos)
    v = rx - tx
    d3d = float(np.linalg.norm(v))
    if d3d == 0:
        raise ValueError("transmitter and receiver positions coincide")
    d2d = float(np.hypot(v[0], v[1]))
    phi_d, theta_d = angles_of(tx_orient.to_local(v))
    phi_a, theta_a = angles_of(rx_orient.to_local(-v))
    return LinkGeometry(d3d, d2d, float(phi_d), float(theta_d), float(phi_a), float(theta_a),
                        h_tx=float(tx[2]), h_rx=float(rx[2]))


def los_gain(geo: LinkGeometry, tx: ArraySpec, rx: ArraySpec, lam: float) -> float:
    """Product of both ends' element amplitude gains along the LoS direction."""
    return float(amplitude_gain(rx.pattern, geo.phi_a, geo.theta_a, lam)
                 * amplitude_gain(tx.pattern, geo.phi_d, geo.theta_d, lam))


def los_response(geo: LinkGeometry, tx: ArraySpec, rx: ArraySpec, lam: float,
                 with_pattern: bool = True) -> np.ndarray:
    """Plane-wave LoS matrix (N_rx x N_tx) with unit-modulus entries for isotropic elements.

    Includes the propagation phase exp(-j*2*pi*d/lam) and, unless
    ``with_pattern`` is False, the element gains at the LoS angles.
    """
    a_rx = steering_vector(rx, geo.phi_a, geo.theta_a, lam)
    a_tx = steering_vector(tx, geo.phi_d, geo.theta_d, lam)
    g = los_gain(geo, tx, rx, lam) if with_pattern else 1.0
    return g * np.exp(-2j * np.pi * geo.d3d / lam) * np.outer(a_rx, a_tx)
