import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ridecnn.ingest import (CONDITION_NAMES, TripRecord, WeatherRecord, encode_condition, parse_trips,
                            parse_weather, write_trips, write_weather)

HEADER = "order_id,start_ts,end_ts,pickup_lon,pickup_lat,dropoff_lon,dropoff_lat\n"


def test_table_sample_row():
    src = io.StringIO(HEADER + "mjiwdgkqmonDFvCk3ntBpron5mwfrqvI,1501581031,1501582195,104.11225,30.66703,104.07403,30.6863\n")
    trips, errors = parse_trips(src)
    assert errors == []
    assert trips == [TripRecord("mjiwdgkqmonDFvCk3ntBpron5mwfrqvI", 1501581031, 1501582195,
                                104.11225, 30.66703, 104.07403, 30.6863)]


def test_empty_input():
    assert parse_trips(io.StringIO("")) == ([], [])
    assert parse_weather(io.StringIO("")) == ([], [])


def test_start_after_end_is_reported():
    trips, errors = parse_trips(io.StringIO("a,200,100,104.0,30.0,104.0,30.0\n"), header=False)
    assert trips == []
    assert errors[0].line == 1 and errors[0].reason == "start after end"


@pytest.mark.parametrize("row, reason", [
    ("a,x,100,104,30,104,30", "x"),
    ("a,1,100,104,30,104", "7 columns"),
    ("a,1,100,190,30,104,30", "pickup_lon"),
    ("a,1,100,104,-91,104,30", "pickup_lat"),
    ("a,1.5,100,104,30,104,30", "whole number"),
    ("a,1,100,104,nan,104,30", "pickup_lat"),
])
def test_malformed_rows(row, reason):
    trips, errors = parse_trips(io.StringIO(HEADER + row + "\n"))
    assert trips == []
    assert len(errors) == 1 and errors[0].line == 2 and reason in errors[0].reason


def test_crlf_and_blank_lines():
    text = HEADER.replace("\n", "\r\n") + "a,1,2,104,30,104,30\r\n\r\nb,3,4,104,30,104,30\r\n"
    trips, errors = parse_trips(io.StringIO(text, newline=""))
    assert [t.order_id for t in trips] == ["a", "b"] and errors == []


@pytest.mark.parametrize("name, code", [
    ("Clear", 1), ("Scattered Clouds", 10), ("Thunderstorm", 0), ("Mist", 6), ("  light RAIN  ", 4),
    ("Mostly  Cloudy", 7), ("Unknown", 0), ("", 0),
])
def test_encode_condition(name, code):
    assert encode_condition(name) == code


def test_condition_table_is_complete():
    assert {encode_condition(n) for n in CONDITION_NAMES} == set(range(11))


@given(st.text())
def test_encode_condition_total(name):
    assert encode_condition(name) in range(11)


def test_weather_row():
    records, errors = parse_weather(io.StringIO("ts,temp_f,humidity_pct,condition_name\n1478000000,68.0,55,Mist\n"))
    assert errors == []
    assert records == [WeatherRecord(1478000000, 68.0, 55.0, 6)]


def test_weather_sorted_and_humidity_checked():
    text = "30,60,50,Clear\n10,61,50,Fog\n20,62,130,Haze\n"
    records, errors = parse_weather(io.StringIO(text), header=False)
    assert [r.ts for r in records] == [10, 30]
    assert len(errors) == 1 and errors[0].line == 3 and "humidity" in errors[0].reason


coord = st.floats(-180, 180, allow_nan=False)
lat = st.floats(-90, 90, allow_nan=False)
trip_st = st.builds(
    lambda oid, s, d, a, b, c, e: TripRecord(oid, s, s + d, a, b, c, e),
    st.text("abcdefXYZ0123456789", min_size=1, max_size=12), st.integers(0, 2 ** 40), st.integers(0, 10 ** 5),
    coord, lat, coord, lat,
)


@given(st.lists(trip_st, max_size=20))
def test_trip_round_trip(trips):
    buf = io.StringIO()
    write_trips(trips, buf)
    parsed, errors = parse_trips(io.StringIO(buf.getvalue()))
    assert errors == [] and parsed == trips


weather_st = st.builds(WeatherRecord, st.integers(0, 2 ** 40), st.floats(-60, 130, allow_nan=False),
                       st.floats(0, 100), st.integers(0, 10))


@given(st.lists(weather_st, max_size=20))
def test_weather_round_trip(records):
    records = sorted(records, key=lambda r: r.ts)
    buf = io.StringIO()
    write_weather(records, buf)
    parsed, errors = parse_weather(io.StringIO(buf.getvalue()))
    assert errors == [] and parsed == records


row_st = st.one_of(
    st.just("a,1,2,104.0,30.0,104.0,30.0"),
    st.just("b,5,1,104.0,30.0,104.0,30.0"),
    st.just("c,1,2,3"),
    st.just("d,1,2,999,30,1,1"),
    st.text(st.characters(blacklist_characters="\r\n\x00\"", blacklist_categories=("Cs",)), min_size=1, max_size=30)
    .filter(lambda s: s.strip()),
)


@settings(max_examples=200)
@given(st.lists(row_st, max_size=30))
def test_parsed_plus_errors_equals_rows(rows):
    trips, errors = parse_trips(io.StringIO("\n".join(rows) + "\n"), header=False)
    assert len(trips) + len(errors) == len(rows)
