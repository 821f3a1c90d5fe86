"""CSV / JSON serialization of run artifacts.

Every CSV written here starts with a ``# config_hash=<hash>`` comment line;
the readers skip comment lines. Floats are written with ``repr`` so a
write/read cycle is exact. Missing values are empty fields.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domain import MaximaMatrix, StationSet, CoordSystem
from .shrinkage import Network


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], config_hash: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        return [h.strip() for h in header], [r for r in reader if r]


def _float(s: str) -> float:
    s = s.strip()
    return float("nan") if s == "" else float(s)


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return None if not math.isfinite(f) else f
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def config_hash(config: dict) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_stations(path, s: StationSet, chash: str) -> None:
    cols = ["station", "x", "y"] if s.coord_system is CoordSystem.PLANAR else ["station", "lon", "lat"]
    write_csv(path, cols, ((sid, *xy) for sid, xy in zip(s.ids, s.coords.tolist())), chash)


def write_maxima(path, mx: MaximaMatrix, chash: str) -> None:
    ids = mx.station_ids or tuple(f"s{k}" for k in range(mx.shape[1]))
    rows = (
        (label, *np.where(valid, vals, np.nan))
        for label, vals, valid in zip(mx.block_labels, mx.values, mx.valid)
    )
    write_csv(path, ["block", *ids], rows, chash)


def read_maxima(path) -> MaximaMatrix:
    header, rows = read_csv(path)
    if not header or header[0] != "block" or len(header) < 3:
        raise ValueError(f"{path}: expected header block,<station ids...>")
    if any(len(r) != len(header) for r in rows):
        raise ValueError(f"{path}: ragged rows")
    labels = []
    for r in rows:
        try:
            labels.append(int(r[0]))
        except ValueError:
            labels.append(r[0])
    vals = np.array([[_float(x) for x in r[1:]] for r in rows], dtype=float).reshape(len(rows), -1)
    return MaximaMatrix(vals, np.isfinite(vals), tuple(labels), tuple(header[1:]))


def write_matrix(path, a: np.ndarray, ids: Sequence[str], chash: str) -> None:
    write_csv(path, ["station", *ids], ((sid, *row) for sid, row in zip(ids, a)), chash)


def read_matrix(path) -> tuple[list[str], np.ndarray]:
    header, rows = read_csv(path)
    ids = header[1:]
    a = np.array([[_float(x) for x in r[1:]] for r in rows], dtype=float)
    return ids, a


def write_edges(path, net: Network, ids: Sequence[str], chash: str) -> None:
    rows = (
        (ids[a], ids[b], w, h)
        for a, b, w, h in zip(net.i.tolist(), net.j.tolist(), net.weight.tolist(), net.distance.tolist())
    )
    write_csv(path, ["i", "j", "chi", "distance"], rows, chash)


def network_geojson(net: Network, s: StationSet, chash: str) -> dict:
    feats = []
    for a, b, w, h in zip(net.i.tolist(), net.j.tolist(), net.weight.tolist(), net.distance.tolist()):
        feats.append({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [s.coords[a].tolist(), s.coords[b].tolist()]},
            "properties": {"i": s.ids[a], "j": s.ids[b], "chi": w, "distance_km": h},
        })
    return {
        "type": "FeatureCollection",
        "properties": {"config_hash": chash, "estimator": net.estimator, "chi_min": net.chi_min},
        "features": feats,
    }
