"""Planar service area, scenario lattice, subregion partition and distances.

Coordinates are planar meters. Regions are closed: a lattice point on a
region's boundary belongs to that region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePolygon, EmptyRegion, MissingDistance, UnsupportedMetric

METRICS = ("euclidean", "rectilinear", "chebyshev", "table")


def _segments_cross(p1, p2, q1, q2, tol):
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) <= tol else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return (min(a[0], b[0]) - tol <= c[0] <= max(a[0], b[0]) + tol
                and min(a[1], b[1]) - tol <= c[1] <= max(a[1], b[1]) + tol)

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_seg(p1, p2, q1)) or (o2 == 0 and on_seg(p1, p2, q2))
            or (o3 == 0 and on_seg(q1, q2, p1)) or (o4 == 0 and on_seg(q1, q2, p2)))


@dataclass(frozen=True)
class Polygon:
    vertices: tuple

    def __post_init__(self):
        pts = [tuple(map(float, v)) for v in self.vertices]
        if len(pts) > 1 and pts[0] == pts[-1]:
            pts = pts[:-1]
        if len(pts) < 3:
            raise DegeneratePolygon("a polygon needs at least 3 distinct vertices")
        arr = np.asarray(pts)
        if not np.all(np.isfinite(arr)):
            raise DegeneratePolygon("polygon vertices must be finite")
        object.__setattr__(self, "vertices", tuple(pts))
        if abs(self.area) <= 1e-12 * max(1.0, float(np.ptp(arr, axis=0).max()) ** 2):
            raise DegeneratePolygon("polygon has zero area")
        n = len(pts)
        tol = 1e-12 * max(1.0, float(np.abs(arr).max()) ** 2)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_cross(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n], tol):
                    raise DegeneratePolygon(f"edges {i} and {j} intersect")

    @classmethod
    def rectangle(cls, x0, y0, x1, y1) -> "Polygon":
        return cls(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    @property
    def area(self) -> float:
        v = np.asarray(self.vertices, dtype=float)
        x, y = v[:, 0], v[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        v = self.array
        return float(v[:, 0].min()), float(v[:, 1].min()), float(v[:, 0].max()), float(v[:, 1].max())

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        """Closed point-in-polygon test, vectorised over an (N, 2) array."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        px, py = pts[:, 0], pts[:, 1]
        v = self.array
        inside = np.zeros(len(pts), dtype=bool)
        on_edge = np.zeros(len(pts), dtype=bool)
        for (x1, y1), (x2, y2) in zip(v, np.roll(v, -1, axis=0)):
            ex, ey = x2 - x1, y2 - y1
            length = math.hypot(ex, ey)
            cross = ex * (py - y1) - ey * (px - x1)
            dot = (px - x1) * ex + (py - y1) * ey
            on_edge |= (np.abs(cross) <= tol * max(length, 1.0)) & (dot >= -tol) & (dot <= length * length + tol)
            straddle = (y1 > py) != (y2 > py)
            with np.errstate(divide="ignore", invalid="ignore"):
                x_hit = x1 + (py - y1) * ex / ey
            inside ^= straddle & (px < x_hit)
        return inside | on_edge


@dataclass
class ScenarioGrid:
    spacing: float
    points: np.ndarray            # (K, 2), row-major lattice order
    membership: np.ndarray        # (K, J) bool
    subregion_of: np.ndarray      # (K,) int, dense ids by first occurrence

    @property
    def n_scenarios(self) -> int:
        return len(self.points)

    @property
    def n_regions(self) -> int:
        return self.membership.shape[1]

    @property
    def n_subregions(self) -> int:
        return int(self.subregion_of.max()) + 1 if len(self.subregion_of) else 0

    def region_members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.membership[:, j])

    def region_index(self) -> list[np.ndarray]:
        return [self.region_members(j) for j in range(self.n_regions)]

    def regions_of(self, k: int) -> frozenset:
        return frozenset(np.flatnonzero(self.membership[k]).tolist())

    def subregion_members(self, r: int) -> np.ndarray:
        return np.flatnonzero(self.subregion_of == r)

    def subregion_regions(self, r: int) -> frozenset:
        return self.regions_of(int(self.subregion_members(r)[0]))


def lattice_points(bbox, spacing: float) -> np.ndarray:
    """All lattice points inside ``bbox``, anchored at its min corner, row-major (y outer, x inner)."""
    x0, y0, x1, y1 = bbox
    nx = int(math.floor((x1 - x0) / spacing + 1e-9)) + 1
    ny = int(math.floor((y1 - y0) / spacing + 1e-9)) + 1
    xs = x0 + spacing * np.arange(nx)
    ys = y0 + spacing * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def membership_matrix(regions, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return np.column_stack([r.contains(pts) for r in regions]) if regions else np.zeros((len(pts), 0), bool)


def partition_subregions(membership) -> np.ndarray:
    """Subregion id per scenario: identical membership sets share an id, ids dense by first occurrence."""
    M = np.asarray(membership, dtype=bool)
    if len(M) == 0:
        return np.zeros(0, dtype=np.int64)
    _, first, inverse = np.unique(M, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return rank[inverse].astype(np.int64)


def build_lattice(area: Polygon | None, regions: list[Polygon], spacing: float) -> ScenarioGrid:
    if not spacing > 0:
        raise ValueError("lattice spacing must be positive")
    if not regions:
        raise ValueError("at least one region is required")
    if area is not None:
        bbox = area.bbox
    else:
        boxes = np.array([r.bbox for r in regions])
        bbox = (boxes[:, 0].min(), boxes[:, 1].min(), boxes[:, 2].max(), boxes[:, 3].max())
    pts = lattice_points(bbox, spacing)
    tol = 1e-9 * max(1.0, spacing)
    M = np.column_stack([r.contains(pts, tol=tol) for r in regions])
    keep = M.any(axis=1)
    pts, M = pts[keep], M[keep]
    for j in range(M.shape[1]):
        if not M[:, j].any():
            raise EmptyRegion(j)
    return ScenarioGrid(float(spacing), pts, M, partition_subregions(M))


@dataclass
class DistanceTable:
    values: np.ndarray  # (|I|, |K|)
    site_ids: list = field(default_factory=list)
    scenario_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("distance table must be two-dimensional")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("distances must be finite and non-negative")
        if not self.site_ids:
            self.site_ids = list(range(self.values.shape[0]))
        if not self.scenario_ids:
            self.scenario_ids = list(range(self.values.shape[1]))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class DistanceMetric:
    kind: str = "euclidean"
    table: dict | None = None  # (site_id, scenario_id) -> meters, for kind == "table"

    def __post_init__(self):
        if self.kind not in METRICS:
            raise UnsupportedMetric(f"unknown metric {self.kind!r}")
        if self.kind == "table" and self.table is None:
            raise UnsupportedMetric("table metric needs a distance table")


def ell_of_sigma(metric: DistanceMetric | str, spacing: float) -> float:
    """Largest distance from a point of a subregion to its nearest lattice scenario."""
    kind = metric if isinstance(metric, str) else metric.kind
    if spacing < 0:
        raise ValueError("spacing must be non-negative")
    if kind == "rectilinear":
        return 2.0 * spacing
    if kind == "euclidean":
        return math.sqrt(2.0) * spacing
    if kind == "chebyshev":
        return float(spacing)
    raise UnsupportedMetric(f"no lattice bound for metric {kind!r}")


def pairwise(a, b, kind: str = "euclidean") -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    dx = np.abs(a[:, None, 0] - b[None, :, 0])
    dy = np.abs(a[:, None, 1] - b[None, :, 1])
    if kind == "euclidean":
        return np.hypot(dx, dy)
    if kind == "rectilinear":
        return dx + dy
    if kind == "chebyshev":
        return np.maximum(dx, dy)
    raise UnsupportedMetric(f"metric {kind!r} needs coordinates")


def compute_distances(sites, grid, metric: DistanceMetric | str = "euclidean",
                      site_ids=None) -> DistanceTable:
    """Site-by-scenario distances. ``grid`` is a ScenarioGrid or an (N, 2) point array."""
    if isinstance(metric, str):
        metric = DistanceMetric(metric)
    points = grid.points if isinstance(grid, ScenarioGrid) else np.asarray(grid, dtype=float).reshape(-1, 2)
    n_sites = len(site_ids) if site_ids is not None else len(np.asarray(sites).reshape(-1, 2))
    if n_sites == 0:
        raise ValueError("at least one site is required")
    site_ids = list(site_ids) if site_ids is not None else list(range(n_sites))
    scen_ids = list(range(len(points)))
    if metric.kind != "table":
        return DistanceTable(pairwise(sites, points, metric.kind), site_ids, scen_ids)
    out = np.empty((n_sites, len(points)))
    for a, i in enumerate(site_ids):
        for k in scen_ids:
            try:
                out[a, k] = metric.table[(i, k)]
            except KeyError:
                raise MissingDistance(i, k) from None
    return DistanceTable(out, site_ids, scen_ids)


def nearest_assignment(d, open_sites) -> tuple[np.ndarray, np.ndarray]:
    """Index of the nearest open site for every column of ``d`` (lowest index on ties) and its distance."""
    d = np.asarray(d, dtype=float)
    open_idx = np.flatnonzero(np.asarray(open_sites) > 0.5)
    if open_idx.size == 0:
        raise ValueError("no open site")
    sub = d[open_idx]
    pos = np.argmin(sub, axis=0)
    return open_idx[pos], sub[pos, np.arange(d.shape[1])]
