"""Trajectory writers and readers: GeoJSON, GPX and CSV.

Writers are byte-deterministic: fixed key order, fixed float formatting
(``repr``), ``\\n`` line endings.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import math
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Sequence

from .geo import GeoPoint
from .kinematics import Fix
from .pipeline import Trajectory

CSV_COLUMNS = ("t_unix_s", "lat", "lon", "speed_mps", "accel_mps2")
GPX_NS = "http://www.topografix.com/GPX/1/1"
FORMATS = ("geojson", "gpx", "csv")
SUFFIX = {"geojson": ".geojson", "gpx": ".gpx", "csv": ".csv"}


def _fixes(t: Trajectory | Sequence[Fix]) -> Sequence[Fix]:
    return t.fixes if isinstance(t, Trajectory) else t


def iso_utc(ts: float) -> str:
    d = dt.datetime.fromtimestamp(ts, tz=dt.timezone.utc)
    if ts == math.floor(ts):
        return d.strftime("%Y-%m-%dT%H:%M:%SZ")
    return d.strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def parse_iso_utc(s: str) -> float:
    d = dt.datetime.fromisoformat(s.replace("Z", "+00:00"))
    if d.tzinfo is None:
        d = d.replace(tzinfo=dt.timezone.utc)
    return d.timestamp()


# --- GeoJSON -------------------------------------------------------------------

def geojson_dict(t: Trajectory | Sequence[Fix]) -> dict:
    fx = _fixes(t)
    props: dict = {
        "times": [f.t for f in fx],
        "speeds_mps": [f.speed for f in fx],
        "accels_mps2": [f.accel for f in fx],
    }
    if isinstance(t, Trajectory):
        props["day"] = t.day.isoformat() if t.day else None
        props["identity"] = t.identity_ref
        props["segments"] = [{"kind": s.kind.value, "start": s.start, "end": s.end, "label": s.label}
                             for s in t.segments]
    return {
        "type": "Feature",
        "geometry": {"type": "LineString", "coordinates": [[f.point.lon, f.point.lat] for f in fx]},
        "properties": props,
    }


def dumps_geojson(t: Trajectory | Sequence[Fix]) -> str:
    return json.dumps(geojson_dict(t), separators=(",", ":")) + "\n"


def loads_geojson(text: str) -> list[Fix]:
    doc = json.loads(text)
    if doc.get("type") == "FeatureCollection":
        doc = doc["features"][0]
    coords = doc["geometry"]["coordinates"]
    props = doc.get("properties") or {}
    times = props.get("times")
    if times is None or len(times) != len(coords):
        raise ValueError("GeoJSON feature needs a 'times' array matching its coordinates")
    speeds = props.get("speeds_mps") or [None] * len(coords)
    accels = props.get("accels_mps2") or [None] * len(coords)
    return [Fix(float(t), GeoPoint(float(c[1]), float(c[0])), s, a)
            for t, c, s, a in zip(times, coords, speeds, accels)]


# --- GPX -----------------------------------------------------------------------

def dumps_gpx(t: Trajectory | Sequence[Fix], name: str = "") -> str:
    ET.register_namespace("", GPX_NS)
    root = ET.Element(f"{{{GPX_NS}}}gpx", {"version": "1.1", "creator": "mobisynth"})
    trk = ET.SubElement(root, f"{{{GPX_NS}}}trk")
    if name:
        ET.SubElement(trk, f"{{{GPX_NS}}}name").text = name
    seg = ET.SubElement(trk, f"{{{GPX_NS}}}trkseg")
    for f in _fixes(t):
        pt = ET.SubElement(seg, f"{{{GPX_NS}}}trkpt", {"lat": repr(f.point.lat), "lon": repr(f.point.lon)})
        ET.SubElement(pt, f"{{{GPX_NS}}}time").text = iso_utc(f.t)
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def loads_gpx(text: str) -> list[Fix]:
    root = ET.fromstring(text.encode() if isinstance(text, str) else text)
    out = []
    for pt in root.iter():
        if pt.tag.rsplit("}", 1)[-1] != "trkpt":
            continue
        tm = next((c.text for c in pt if c.tag.rsplit("}", 1)[-1] == "time"), None)
        if tm is None:
            raise ValueError("GPX track point without a time")
        out.append(Fix(parse_iso_utc(tm.strip()), GeoPoint(float(pt.get("lat")), float(pt.get("lon")))))
    return out


# --- CSV -----------------------------------------------------------------------

def _num(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def dumps_csv(t: Trajectory | Sequence[Fix]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for f in _fixes(t):
        w.writerow([_num(f.t), _num(f.point.lat), _num(f.point.lon), _num(f.speed), _num(f.accel)])
    return buf.getvalue()


def loads_csv(text: str) -> list[Fix]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"CSV header must be {','.join(CSV_COLUMNS)}")
    out = []
    for r in rows[1:]:
        if not r:
            continue
        t, lat, lon, sp, ac = r
        out.append(Fix(float(t), GeoPoint(float(lat), float(lon)), float(sp) if sp else None,
                       float(ac) if ac else None))
    return out


# --- by file name ----------------------------------------------------------------

def format_of(path: str | Path) -> str:
    suf = Path(path).suffix.lower()
    for fmt, s in SUFFIX.items():
        if suf == s or (fmt == "geojson" and suf == ".json"):
            return fmt
    raise ValueError(f"unknown trajectory format for {path}")


def dumps(fmt: str, t: Trajectory | Sequence[Fix]) -> str:
    if fmt == "geojson":
        return dumps_geojson(t)
    if fmt == "gpx":
        return dumps_gpx(t)
    if fmt == "csv":
        return dumps_csv(t)
    raise ValueError(f"unknown format {fmt!r}")


def write_trajectory(path: str | Path, t: Trajectory | Sequence[Fix], fmt: str | None = None) -> None:
    Path(path).write_text(dumps(fmt or format_of(path), t), encoding="utf-8", newline="\n")


def read_trajectory(path: str | Path) -> list[Fix]:
    fmt = format_of(path)
    text = Path(path).read_text(encoding="utf-8")
    if fmt == "geojson":
        return loads_geojson(text)
    if fmt == "gpx":
        return loads_gpx(text)
    return loads_csv(text)
