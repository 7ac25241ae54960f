"""CSV readers and writers for sites, points, regions, distance tables and result files.

Every file has a header row. Readers report malformed content with the file
name and 1-based line number.
"""

from __future__ import annotations

import csv
import math
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import DegeneratePolygon, MalformedFile
from .geometry import Polygon


def _rows(path, required):
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise MalformedFile(path, 0, "file not found") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MalformedFile(path, 1, "empty file, expected a header row") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise MalformedFile(path, 1, f"missing column(s) {', '.join(missing)}")
        pos = {c: header.index(c) for c in header}
        for line_no, raw in enumerate(reader, start=2):
            if not raw or all(not cell.strip() for cell in raw):
                continue
            if len(raw) != len(header):
                raise MalformedFile(path, line_no, f"expected {len(header)} fields, found {len(raw)}")
            yield line_no, {c: raw[pos[c]].strip() for c in header}


def _float(path, line, value, column):
    try:
        v = float(value)
    except ValueError:
        raise MalformedFile(path, line, f"column {column}: {value!r} is not a number") from None
    if not math.isfinite(v):
        raise MalformedFile(path, line, f"column {column}: value must be finite")
    return v


def read_points(path) -> np.ndarray:
    """Columns x_m, y_m (any extra columns are ignored)."""
    pts = [(_float(path, ln, r["x_m"], "x_m"), _float(path, ln, r["y_m"], "y_m"))
           for ln, r in _rows(path, ("x_m", "y_m"))]
    if not pts:
        raise MalformedFile(path, 2, "no data rows")
    return np.asarray(pts, dtype=float)


def read_sites(path) -> tuple[list, np.ndarray]:
    """Columns site_id, x_m, y_m."""
    ids, pts = [], []
    for ln, r in _rows(path, ("site_id", "x_m", "y_m")):
        if r["site_id"] in ids:
            raise MalformedFile(path, ln, f"duplicate site_id {r['site_id']!r}")
        ids.append(r["site_id"])
        pts.append((_float(path, ln, r["x_m"], "x_m"), _float(path, ln, r["y_m"], "y_m")))
    if not ids:
        raise MalformedFile(path, 2, "no data rows")
    return ids, np.asarray(pts, dtype=float)


def read_regions(path) -> tuple[list, list[Polygon]]:
    """One row per vertex: region_id, vertex_index, x_m, y_m.

    Rings are ordered by vertex_index when that column is present, otherwise by
    file order. Regions keep the order of their first appearance.
    """
    rings: OrderedDict = OrderedDict()
    first_line = {}
    for ln, r in _rows(path, ("region_id", "x_m", "y_m")):
        rid = r["region_id"]
        first_line.setdefault(rid, ln)
        order = len(rings.get(rid, ()))
        if "vertex_index" in r:
            try:
                order = int(r["vertex_index"])
            except ValueError:
                raise MalformedFile(path, ln, f"vertex_index {r['vertex_index']!r} is not an integer") from None
        xy = (_float(path, ln, r["x_m"], "x_m"), _float(path, ln, r["y_m"], "y_m"))
        rings.setdefault(rid, []).append((order, ln, xy))
    if not rings:
        raise MalformedFile(path, 2, "no data rows")
    polys = []
    for rid, ring in rings.items():
        ring.sort(key=lambda v: v[0])
        orders = [v[0] for v in ring]
        if len(set(orders)) != len(orders):
            raise MalformedFile(path, first_line[rid], f"region {rid}: repeated vertex_index")
        try:
            polys.append(Polygon(tuple(v[2] for v in ring)))
        except DegeneratePolygon as exc:
            raise MalformedFile(path, first_line[rid], f"region {rid}: {exc}") from None
    return list(rings.keys()), polys


def read_distance_table(path) -> dict:
    """Columns site_id, scenario_id, distance_m; returns {(site_id, scenario_index): meters}."""
    table = {}
    for ln, r in _rows(path, ("site_id", "scenario_id", "distance_m")):
        try:
            k = int(r["scenario_id"])
        except ValueError:
            raise MalformedFile(path, ln, f"scenario_id {r['scenario_id']!r} is not an integer") from None
        v = _float(path, ln, r["distance_m"], "distance_m")
        if v < 0:
            raise MalformedFile(path, ln, "distance must be non-negative")
        table[(r["site_id"], k)] = v
    return table


def read_lambda(path) -> tuple[list, np.ndarray]:
    ids, lam = [], []
    for ln, r in _rows(path, ("region_id", "lambda")):
        ids.append(r["region_id"])
        lam.append(_float(path, ln, r["lambda"], "lambda"))
    return ids, np.asarray(lam, dtype=float)


def read_deployment(path) -> tuple[list, np.ndarray]:
    ids, y = [], []
    for ln, r in _rows(path, ("site_id", "opened")):
        if r["opened"] not in ("0", "1"):
            raise MalformedFile(path, ln, "opened must be 0 or 1")
        ids.append(r["site_id"])
        y.append(int(r["opened"]))
    return ids, np.asarray(y, dtype=int)


def fmt(v) -> str:
    """Locale-independent text for a CSV cell; floats use repr precision."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_points(path, points, ids=None, id_column=None):
    points = np.asarray(points, dtype=float)
    if ids is None:
        return write_csv(path, ("x_m", "y_m"), points.tolist())
    return write_csv(path, (id_column, "x_m", "y_m"), [(i, x, y) for i, (x, y) in zip(ids, points)])


def write_regions(path, regions, ids=None):
    ids = ids if ids is not None else list(range(len(regions)))
    rows = [(rid, v, x, y) for rid, poly in zip(ids, regions) for v, (x, y) in enumerate(poly.vertices)]
    return write_csv(path, ("region_id", "vertex_index", "x_m", "y_m"), rows)
