from __future__ import annotations

import datetime as dt
import json
import xml.etree.ElementTree as ET

import pytest

from mobisynth.formats import (CSV_COLUMNS, dumps_csv, dumps_geojson, dumps_gpx, format_of, iso_utc, loads_csv,
                               loads_geojson, loads_gpx, parse_iso_utc, read_trajectory, write_trajectory)
from mobisynth.geo import GeoPoint
from mobisynth.kinematics import Fix
from mobisynth.pipeline import synthesize_day

FIXES = [Fix(1_700_000_000.0, GeoPoint(48.1, 11.5), 0.0, 0.0),
         Fix(1_700_000_001.0, GeoPoint(48.10001, 11.50002), 1.25, 1.25),
         Fix(1_700_000_060.5, GeoPoint(48.1000123456789, 11.5000987654321), None, None)]


def test_geojson_contract():
    doc = json.loads(dumps_geojson(FIXES))
    assert doc["type"] == "Feature" and doc["geometry"]["type"] == "LineString"
    assert len(doc["properties"]["times"]) == len(doc["geometry"]["coordinates"])
    assert doc["geometry"]["coordinates"][0] == [11.5, 48.1]
    assert loads_geojson(dumps_geojson(FIXES)) == FIXES


def test_csv_contract():
    text = dumps_csv(FIXES)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    assert loads_csv(text) == FIXES
    with pytest.raises(ValueError):
        loads_csv("t,lat\n")


def test_gpx_roundtrip_positions_and_times():
    text = dumps_gpx(FIXES, name="day")
    root = ET.fromstring(text.encode())
    assert root.get("version") == "1.1"
    back = loads_gpx(text)
    assert [f.t for f in back] == [f.t for f in FIXES]
    assert [f.point for f in back] == [f.point for f in FIXES]
    assert "np.float64" not in text


def test_iso_times():
    assert iso_utc(0.0) == "1970-01-01T00:00:00Z"
    assert parse_iso_utc("1970-01-01T00:00:01.500000Z") == 1.5


def test_format_dispatch(tmp_path):
    for suffix in (".geojson", ".gpx", ".csv", ".json"):
        p = tmp_path / f"x{suffix}"
        write_trajectory(p, FIXES)
        assert [f.t for f in read_trajectory(p)] == [f.t for f in FIXES]
    with pytest.raises(ValueError):
        format_of("x.kml")


def test_writers_deterministic_on_a_day(two_state_identity, graph, provider):
    t = synthesize_day(two_state_identity, dt.date(2024, 1, 2), graph, provider, rng_seed=4)
    for dump in (dumps_geojson, dumps_gpx, dumps_csv):
        assert dump(t) == dump(t)
    doc = json.loads(dumps_geojson(t))
    assert doc["properties"]["day"] == "2024-01-02"
    assert loads_csv(dumps_csv(t)) == list(t.fixes)
