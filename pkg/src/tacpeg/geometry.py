"""Planar geometry of pegs, holes, and contact.

Pegs are convex polygons centered on their centroid, CCW-ordered. The hole
for a peg is the same polygon with every edge pushed outward by half the
radial clearance, corners mitered. A pose error (e_x, e_y, e_rz) transforms
the peg by rotating e_rz degrees about the centroid and then translating by
(e_x, e_y) millimeters; the peg is insertable when every transformed vertex
satisfies all hole half-planes within a closed-boundary tolerance of
1e-9 mm outward.

Contact for a non-insertable pose is summarized against the feasible
translation set T(e_rz) = {(x, y) : rotated peg translated by (x, y) fits}.
T is sampled on a 0.02 mm grid (an erosion of the hole by the rotated peg)
and cached per (shape, clearance, e_rz quantized to 0.05 degrees). The
reaction direction is the unit vector from the error toward the nearest
feasible point; the penetration is that distance. When T(e_rz) is empty the
translational part is measured against T(0) and the rotational reaction is
-sign(e_rz).
"""

import math
import threading
from dataclasses import dataclass

import numpy as np

from . import kernels

SHAPE_KINDS = ("square", "triangle", "round", "hexagon")
ROUND_VERTEX_COUNT = 64
DEFAULT_SIZE_MM = 25.0

CONTAIN_TOL_MM = 1e-9
EROSION_PITCH_MM = 0.02
RZ_QUANTUM_DEG = 0.05

# Bisection resolution for allowable_deviation, in the axis unit (mm or deg).
ALLOWANCE_RESOLUTION = 1e-4
ROTATION_CAP_DEG = 89.99

SAMPLE_REJECT_CAP = 1000


@dataclass(frozen=True)
class PegShape:
    kind: str
    size_mm: float = DEFAULT_SIZE_MM

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}; expected one of {SHAPE_KINDS}")
        if not (self.size_mm > 0 and math.isfinite(self.size_mm)):
            raise ValueError(f"size_mm must be finite and positive, got {self.size_mm}")


@dataclass(frozen=True)
class ClearanceSpec:
    clearance_mm: float

    def __post_init__(self):
        if not (self.clearance_mm > 0 and math.isfinite(self.clearance_mm)):
            raise ValueError(f"clearance_mm must be finite and positive, got {self.clearance_mm}")


@dataclass(frozen=True)
class PoseError:
    """In-plane misalignment of the peg relative to the hole frame.

    e_x / e_y in millimeters, e_rz in degrees, |e_rz| < 90.
    """

    e_x: float
    e_y: float
    e_rz: float

    def __post_init__(self):
        for name in ("e_x", "e_y", "e_rz"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if abs(self.e_rz) >= 90.0:
            raise ValueError(f"|e_rz| must be < 90 degrees, got {self.e_rz}")

    def as_tuple(self):
        return (self.e_x, self.e_y, self.e_rz)


@dataclass(frozen=True)
class ContactInfo:
    """Contact summary for a pose. All fields zero when in_contact is False.

    reaction_x / reaction_y form a unit vector pointing from the error
    toward the nearest feasible translation (zero when already on it);
    penetration_mm is the distance to it. reaction_rz is -sign(e_rz) when
    no translation can make the rotated peg fit, else 0.
    """

    in_contact: bool
    penetration_mm: float
    reaction_x: float
    reaction_y: float
    reaction_rz: float


class RejectionCapError(RuntimeError):
    """Raised when rejection sampling cannot find a colliding pose."""


def peg_polygon(shape: PegShape) -> np.ndarray:
    """CCW vertex array (N, 2) for the peg cross-section, centroid at origin.

    square: axis-aligned, side = size_mm. triangle: equilateral, side =
    size_mm, one vertex on the +x axis. round: regular 64-gon, diameter =
    size_mm. hexagon: regular, across-flats = size_mm, flat top.
    Point-symmetric shapes are built by negating the first half of the
    vertex list so the symmetry is exact in floating point.
    """
    return _peg_polygon_cached(shape).copy()


def _build_peg_polygon(shape: PegShape) -> np.ndarray:
    s = shape.size_mm
    if shape.kind == "square":
        h = s / 2.0
        verts = np.array([[h, -h], [h, h], [-h, h], [-h, -h]], dtype=np.float64)
    elif shape.kind == "triangle":
        r = s / math.sqrt(3.0)
        half = r / 2.0
        yy = r * (math.sqrt(3.0) / 2.0)
        verts = np.array([[r, 0.0], [-half, yy], [-half, -yy]], dtype=np.float64)
    elif shape.kind == "hexagon":
        r = s / math.sqrt(3.0)
        first = np.empty((3, 2), dtype=np.float64)
        for k in range(3):
            a = 2.0 * math.pi * k / 6.0
            first[k, 0] = r * math.cos(a)
            first[k, 1] = r * math.sin(a)
        verts = np.vstack([first, -first])
    else:  # round
        r = s / 2.0
        n = ROUND_VERTEX_COUNT
        first = np.empty((n // 2, 2), dtype=np.float64)
        for k in range(n // 2):
            a = 2.0 * math.pi * k / n
            first[k, 0] = r * math.cos(a)
            first[k, 1] = r * math.sin(a)
        verts = np.vstack([first, -first])
    return verts


_peg_cache: dict = {}
_hole_cache: dict = {}
_feasible_cache: dict = {}
_cache_lock = threading.Lock()
_CACHE_MISS = object()


def _peg_polygon_cached(shape: PegShape) -> np.ndarray:
    key = (shape.kind, shape.size_mm)
    with _cache_lock:
        got = _peg_cache.get(key)
    if got is not None:
        return got
    verts = _build_peg_polygon(shape)
    verts.setflags(write=False)
    with _cache_lock:
        _peg_cache[key] = verts
    return verts


def polygon_edges(verts: np.ndarray):
    """Outward unit normals and offsets (nx, ny, d) with n . x <= d inside."""
    nxt = np.roll(verts, -1, axis=0)
    ex = nxt[:, 0] - verts[:, 0]
    ey = nxt[:, 1] - verts[:, 1]
    length = np.sqrt(ex * ex + ey * ey)
    # CCW polygon: outward normal is the edge direction rotated -90 degrees.
    nx = ey / length
    ny = -ex / length
    d = nx * verts[:, 0] + ny * verts[:, 1]
    return nx, ny, d


def hole_polygon(shape: PegShape, clearance: ClearanceSpec) -> np.ndarray:
    """Hole cross-section: peg edges offset outward by clearance/2, mitered."""
    nx, ny, d = _hole_edges_cached(shape, clearance)
    n = nx.shape[0]
    verts = np.empty((n, 2), dtype=np.float64)
    for i in range(n):
        j = i - 1  # vertex i is the intersection of edges i-1 and i
        det = nx[j] * ny[i] - ny[j] * nx[i]
        verts[i, 0] = (d[j] * ny[i] - ny[j] * d[i]) / det
        verts[i, 1] = (nx[j] * d[i] - d[j] * nx[i]) / det
    return verts


def _hole_edges_cached(shape: PegShape, clearance: ClearanceSpec):
    key = (shape.kind, shape.size_mm, clearance.clearance_mm)
    with _cache_lock:
        got = _hole_cache.get(key)
    if got is not None:
        return got
    verts = _peg_polygon_cached(shape)
    nx, ny, d = polygon_edges(verts)
    d = d + clearance.clearance_mm / 2.0
    for arr in (nx, ny, d):
        arr.setflags(write=False)
    with _cache_lock:
        _hole_cache[key] = (nx, ny, d)
    return nx, ny, d


def _transformed_peg(shape: PegShape, e: PoseError):
    verts = _peg_polygon_cached(shape)
    th = e.e_rz * (math.pi / 180.0)
    ct = math.cos(th)
    st = math.sin(th)
    px = verts[:, 0] * ct - verts[:, 1] * st + e.e_x
    py = verts[:, 0] * st + verts[:, 1] * ct + e.e_y
    return px, py


def containment_margin(shape: PegShape, clearance: ClearanceSpec, e: PoseError) -> float:
    """Worst signed violation of the hole half-planes by the transformed peg.

    <= 0 means every vertex is inside (or on) the hole boundary.
    """
    px, py = _transformed_peg(shape, e)
    nx, ny, d = _hole_edges_cached(shape, clearance)
    return float(kernels.max_violation(px, py, nx, ny, d).max())


def is_insertable(shape: PegShape, clearance: ClearanceSpec, e: PoseError) -> bool:
    return containment_margin(shape, clearance, e) <= CONTAIN_TOL_MM


def _feasible_set(shape: PegShape, clearance: ClearanceSpec, quantum_index: int):
    """Grid sample of T(rz) for rz = quantum_index * RZ_QUANTUM_DEG.

    Returns (xs, ys) arrays of feasible translations, or None when empty.
    Cached; the grid pitch is EROSION_PITCH_MM and grid coordinates are
    exact integer multiples of the pitch.
    """
    key = (shape.kind, shape.size_mm, clearance.clearance_mm, quantum_index)
    with _cache_lock:
        got = _feasible_cache.get(key, _CACHE_MISS)
    if got is not _CACHE_MISS:
        return got

    rz = quantum_index * RZ_QUANTUM_DEG
    th = rz * (math.pi / 180.0)
    ct = math.cos(th)
    st = math.sin(th)
    verts = _peg_polygon_cached(shape)
    rx = verts[:, 0] * ct - verts[:, 1] * st
    ry = verts[:, 0] * st + verts[:, 1] * ct
    nx, ny, d = _hole_edges_cached(shape, clearance)
    # Support of the rotated peg along each hole normal; T is the set of
    # translations t with n . t <= d - support for every edge.
    support = (rx[None, :] * nx[:, None] + ry[None, :] * ny[:, None]).max(axis=1)
    slack = d - support
    max_slack = float(slack.max())
    result = None
    if max_slack >= -CONTAIN_TOL_MM:
        # Any feasible t has some edge normal within 60 degrees of its own
        # direction (exterior angles of a convex polygon sum to 360), so
        # |t| <= 2 * max_slack. Grid that square.
        half = max(max_slack, 0.0) * 2.0
        k = int(math.ceil(half / EROSION_PITCH_MM)) + 1
        idx = np.arange(-k, k + 1, dtype=np.float64)
        coords = idx * EROSION_PITCH_MM
        gx = np.repeat(coords, coords.shape[0])
        gy = np.tile(coords, coords.shape[0])
        viol = kernels.max_violation(gx, gy, nx, ny, slack)
        mask = viol <= CONTAIN_TOL_MM
        if mask.any():
            xs = np.ascontiguousarray(gx[mask])
            ys = np.ascontiguousarray(gy[mask])
            xs.setflags(write=False)
            ys.setflags(write=False)
            result = (xs, ys)
    with _cache_lock:
        _feasible_cache[key] = result
    return result


def contact_state(shape: PegShape, clearance: ClearanceSpec, e: PoseError) -> ContactInfo:
    """Contact summary for the pose; see the module docstring for semantics."""
    if is_insertable(shape, clearance, e):
        return ContactInfo(False, 0.0, 0.0, 0.0, 0.0)
    q = int(round(e.e_rz / RZ_QUANTUM_DEG))
    feasible = _feasible_set(shape, clearance, q)
    if feasible is None:
        reaction_rz = -1.0 if e.e_rz > 0 else 1.0
        feasible = _feasible_set(shape, clearance, 0)
    else:
        reaction_rz = 0.0
    xs, ys = feasible
    dx = xs - e.e_x
    dy = ys - e.e_y
    d2 = dx * dx + dy * dy
    j = int(np.argmin(d2))
    pen = math.sqrt(float(d2[j]))
    if pen < 1e-12:
        return ContactInfo(True, 0.0, 0.0, 0.0, reaction_rz)
    return ContactInfo(True, pen, float(dx[j]) / pen, float(dy[j]) / pen, reaction_rz)


_AXIS_DIRECTIONS = {
    "x+": (1.0, 0.0, 0.0),
    "x-": (-1.0, 0.0, 0.0),
    "y+": (0.0, 1.0, 0.0),
    "y-": (0.0, -1.0, 0.0),
    "rz": (0.0, 0.0, 1.0),
}


def allowable_deviation(shape: PegShape, clearance: ClearanceSpec, axis: str,
                        base: PoseError = PoseError(0.0, 0.0, 0.0)) -> float:
    """Largest deviation along a signed axis keeping the pose insertable.

    The other two components stay at the base pose (zero by default).
    Found by bisection to ALLOWANCE_RESOLUTION. Returns 0.0 when even the
    base pose does not fit; returns the rotation cap when no rotation of a
    rotationally symmetric peg ever collides.
    """
    if axis not in _AXIS_DIRECTIONS:
        raise ValueError(f"unknown axis {axis!r}; expected one of {sorted(_AXIS_DIRECTIONS)}")
    ux, uy, urz = _AXIS_DIRECTIONS[axis]

    def fits(t: float) -> bool:
        return is_insertable(shape, clearance, PoseError(
            base.e_x + ux * t, base.e_y + uy * t, base.e_rz + urz * t))

    if not fits(0.0):
        return 0.0
    cap = ROTATION_CAP_DEG - abs(base.e_rz) if axis == "rz" else 4.0 * shape.size_mm
    lo = 0.0
    hi = max(clearance.clearance_mm, 0.25)
    while fits(hi):
        lo = hi
        hi *= 2.0
        if hi >= cap:
            if fits(cap):
                return cap
            hi = cap
            break
    while hi - lo > ALLOWANCE_RESOLUTION:
        mid = 0.5 * (lo + hi)
        if fits(mid):
            lo = mid
        else:
            hi = mid
    return lo


def as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def sample_pose_error(seed_or_rng, max_xy_mm: float, max_rz_deg: float,
                      reject_insertable: bool = False,
                      shape: PegShape = None, clearance: ClearanceSpec = None) -> PoseError:
    """Uniform pose error in [-max_xy, max_xy]^2 x [-max_rz, max_rz].

    With reject_insertable=True, redraws until the pose collides (requires
    shape and clearance); gives up after SAMPLE_REJECT_CAP tries, which
    signals ranges lying entirely inside the feasible region.
    """
    rng = as_rng(seed_or_rng)
    if reject_insertable and (shape is None or clearance is None):
        raise ValueError("reject_insertable requires shape and clearance")
    for _ in range(SAMPLE_REJECT_CAP):
        e = PoseError(
            rng.uniform(-max_xy_mm, max_xy_mm),
            rng.uniform(-max_xy_mm, max_xy_mm),
            rng.uniform(-max_rz_deg, max_rz_deg),
        )
        if not reject_insertable:
            return e
        if not is_insertable(shape, clearance, e):
            return e
    raise RejectionCapError(
        f"no colliding pose found in {SAMPLE_REJECT_CAP} draws; "
        f"ranges (+-{max_xy_mm} mm, +-{max_rz_deg} deg) appear to lie inside "
        f"the feasible region for {shape.kind} at clearance {clearance.clearance_mm}")
