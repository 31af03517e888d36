import io
import math
import random

import pytest
from hypothesis import given, strategies as st

from roadtiles.errors import ConfigError, FormatError, InputError
from roadtiles.ingest import (WayPoint, build_journeys, filter_to_reference, load_waypoints,
                              read_waypoints, write_waypoints)
from roadtiles.network import RoadNetwork
from roadtiles.simgen import LocalProjection

HEADER = "journey_id,timestamp_ms,lat,lon,speed_mps\n"


def load(text):
    return load_waypoints(io.StringIO(text))


def test_three_valid_rows():
    pts, rej = load(HEADER + "a,1,42.0,-93.6,10\na,2,42.0,-93.6,\nb,3,42.1,-93.5,0\n")
    assert len(pts) == 3 and rej == 0
    assert pts[1].speed is None


def test_empty_lat_rejected():
    pts, rej = load(HEADER + "a,1,,-93.6,10\na,2,42.0,-93.6,1\n")
    assert len(pts) == 1 and rej == 1


@pytest.mark.parametrize("row", ["a,1,95.0,-93.6,1", "a,1,42,-181,1", "a,1,42,-93,-1",
                                 "a,nan,42,-93,1", "a,1,42,-93,inf", ",1,42,-93,1", "a,x,42,-93,1"])
def test_invalid_rows_rejected(row):
    pts, rej = load(HEADER + row + "\n")
    assert pts == [] and rej == 1


def test_speed_column_optional():
    pts, rej = load("journey_id,timestamp_ms,lat,lon\na,1,1,1\n")
    assert len(pts) == 1 and pts[0].speed is None


def test_missing_column():
    with pytest.raises(FormatError, match="lon"):
        load("journey_id,timestamp_ms,lat\na,1,1\n")


def test_no_header():
    with pytest.raises(FormatError):
        load("")


def test_undecodable_bytes():
    with pytest.raises(InputError):
        load_waypoints(io.BytesIO(HEADER.encode() + b"\xff\xfe,1,1,1,\n"))


def test_missing_file(tmp_path):
    with pytest.raises(InputError):
        read_waypoints(tmp_path / "nope.csv")


def test_write_read_roundtrip():
    pts = [WayPoint("j1", 1600000000000, 42.123456789, -93.6, 4.25), WayPoint("j1", 1600000001000, 42.1, -93.61)]
    buf = io.StringIO()
    write_waypoints(pts, buf)
    back, rej = load(buf.getvalue())
    assert back == pts and rej == 0


def wp(j, t, lat=0.0, lon=0.0, speed=None):
    return WayPoint(j, t, lat, lon, speed)


def test_grouping():
    js, dropped = build_journeys([wp("a", 1), wp("b", 1), wp("a", 2), wp("b", 2), wp("a", 3)])
    assert [(j.id, len(j)) for j in js] == [("a", 3), ("b", 2)] and dropped == 0


def test_duplicate_timestamp_single_group_dropped():
    js, dropped = build_journeys([wp("a", 5, 1.0), wp("a", 5, 2.0)])
    assert js == [] and dropped == 1


def test_sorted_in_time():
    js, _ = build_journeys([wp("a", 3), wp("a", 1), wp("a", 2)])
    assert [p.t for p in js[0].points] == [1, 2, 3]


point_st = st.builds(wp, st.sampled_from("abc"), st.integers(0, 6),
                     st.floats(-1, 1), st.floats(-1, 1), st.one_of(st.none(), st.floats(0, 40)))


@given(st.lists(point_st, max_size=30), st.randoms())
def test_permutation_invariant_and_valid(points, rnd):
    a, da = build_journeys(points)
    shuffled = list(points)
    rnd.shuffle(shuffled)
    b, db = build_journeys(shuffled)
    assert a == b and da == db
    for j in a:
        assert len(j) >= 2
        assert all(p.journey_id == j.id for p in j.points)
        assert all(p.t < q.t for p, q in zip(j.points, j.points[1:]))


def line_network():
    proj = LocalProjection(42.0, -93.6)
    a = proj.to_latlon(0.0, 0.0)
    b = proj.to_latlon(1000.0, 0.0)
    return RoadNetwork({0: tuple(map(float, a)), 1: tuple(map(float, b))}, [(0, 1)]), proj


def journey_at(proj, xs, y, jid="j"):
    pts = [wp(jid, i, *map(float, proj.to_latlon(x, y))) for i, x in enumerate(xs)]
    return build_journeys(pts)[0][0]


def test_on_road_kept():
    net, proj = line_network()
    j = journey_at(proj, [100, 200, 300], 0.0)
    out, removed, dropped = filter_to_reference([j], net, 15.0)
    assert out == [j] and removed == 0 and dropped == 0


def test_off_road_dropped():
    net, proj = line_network()
    j = journey_at(proj, [100, 200, 300], 100.0)
    out, removed, dropped = filter_to_reference([j], net, 15.0)
    assert out == [] and removed == 3 and dropped == 1


def brute_distance(proj, x, y):
    # point to segment (0,0)-(1000,0) in the projection plane
    cx = min(max(x, 0.0), 1000.0)
    return math.hypot(x - cx, y)


def test_mixed_journey_keeps_on_road_part():
    net, proj = line_network()
    xy = [(100, 0), (200, 1), (300, 50), (400, -2), (500, 0)]
    pts = [wp("j", i, *map(float, proj.to_latlon(x, y))) for i, (x, y) in enumerate(xy)]
    j = build_journeys(pts)[0][0]
    out, removed, _ = filter_to_reference([j], net, 15.0)
    expected = [i for i, (x, y) in enumerate(xy) if brute_distance(proj, x, y) <= 15.0]
    assert [p.t for p in out[0].points] == expected == [0, 1, 3, 4]
    assert removed == 1


def test_filter_idempotent():
    net, proj = line_network()
    rng = random.Random(3)
    js = [journey_at(proj, [rng.uniform(-50, 1050) for _ in range(8)], rng.uniform(-30, 30), f"j{k}")
          for k in range(20)]
    once, _, _ = filter_to_reference(js, net, 15.0)
    twice, removed, dropped = filter_to_reference(once, net, 15.0)
    assert once == twice and removed == 0 and dropped == 0


def test_filter_config_errors():
    net, proj = line_network()
    with pytest.raises(ConfigError):
        filter_to_reference([], net, 0.0)
    with pytest.raises(ConfigError):
        filter_to_reference([], RoadNetwork({0: (0.0, 0.0)}, []), 15.0)
