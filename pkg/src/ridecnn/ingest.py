"""Trip-request and hourly-weather CSV ingestion.

Both parsers are lenient by design: a malformed row becomes a ``RowError``
carrying its 1-based line number, and parsing continues.
"""

from __future__ import annotations

import csv
import math
from typing import IO, Iterable, NamedTuple

TRIP_HEADER = ("order_id", "start_ts", "end_ts", "pickup_lon", "pickup_lat", "dropoff_lon", "dropoff_lat")
WEATHER_HEADER = ("ts", "temp_f", "humidity_pct", "condition_name")

CONDITION_NAMES = (
    "Unknown",
    "Clear",
    "Fog",
    "Haze",
    "Light Rain",
    "Light Rain Showers",
    "Mist",
    "Mostly Cloudy",
    "Partly Cloudy",
    "Patches of Fog",
    "Scattered Clouds",
)
_CONDITION_CODES = {name.lower(): code for code, name in enumerate(CONDITION_NAMES)}


class TripRecord(NamedTuple):
    order_id: str
    start_ts: int
    end_ts: int
    pickup_lon: float
    pickup_lat: float
    dropoff_lon: float
    dropoff_lat: float


class WeatherRecord(NamedTuple):
    ts: int
    temp: float
    humidity: float
    condition: int


class RowError(NamedTuple):
    line: int
    reason: str


def encode_condition(name: str) -> int:
    """Map a weather condition name to its integer code; unlisted names give 0."""
    return _CONDITION_CODES.get(" ".join(name.split()).lower(), 0)


def _parse_ts(text: str) -> int:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not value.is_integer():
            raise ValueError(f"timestamp {text!r} is not a whole number of seconds") from None
        return int(value)


def _parse_coord(text: str, limit: float, what: str) -> float:
    value = float(text)
    if not math.isfinite(value) or abs(value) > limit:
        raise ValueError(f"{what} {text.strip()!r} outside [-{limit:g}, {limit:g}]")
    return value


def _rows(source: IO[str] | Iterable[str], header: bool):
    reader = csv.reader(source)
    for row in reader:
        if header and reader.line_num == 1:
            continue
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        yield reader.line_num, row


def parse_trips(source: IO[str] | Iterable[str], header: bool = True) -> tuple[list[TripRecord], list[RowError]]:
    """Parse trip-request rows (``order_id,start_ts,end_ts,pickup_lon,pickup_lat,dropoff_lon,dropoff_lat``).

    Blank lines are skipped and are not counted as data rows.
    """
    trips: list[TripRecord] = []
    errors: list[RowError] = []
    for line, row in _rows(source, header):
        if len(row) != 7:
            errors.append(RowError(line, f"expected 7 columns, got {len(row)}"))
            continue
        try:
            start = _parse_ts(row[1])
            end = _parse_ts(row[2])
            plon = _parse_coord(row[3], 180.0, "pickup_lon")
            plat = _parse_coord(row[4], 90.0, "pickup_lat")
            dlon = _parse_coord(row[5], 180.0, "dropoff_lon")
            dlat = _parse_coord(row[6], 90.0, "dropoff_lat")
        except ValueError as exc:
            errors.append(RowError(line, str(exc)))
            continue
        if start > end:
            errors.append(RowError(line, "start after end"))
            continue
        trips.append(TripRecord(row[0].strip(), start, end, plon, plat, dlon, dlat))
    return trips, errors


def parse_weather(source: IO[str] | Iterable[str], header: bool = True) -> tuple[list[WeatherRecord], list[RowError]]:
    """Parse ``ts,temp_f,humidity_pct,condition_name`` rows, sorted by timestamp on return."""
    records: list[WeatherRecord] = []
    errors: list[RowError] = []
    for line, row in _rows(source, header):
        if len(row) != 4:
            errors.append(RowError(line, f"expected 4 columns, got {len(row)}"))
            continue
        try:
            ts = _parse_ts(row[0])
            temp = float(row[1])
            humidity = float(row[2])
        except ValueError as exc:
            errors.append(RowError(line, str(exc)))
            continue
        if not math.isfinite(temp):
            errors.append(RowError(line, f"temperature {row[1].strip()!r} is not finite"))
            continue
        if not 0.0 <= humidity <= 100.0:
            errors.append(RowError(line, f"humidity {row[2].strip()!r} outside [0, 100]"))
            continue
        records.append(WeatherRecord(ts, temp, humidity, encode_condition(row[3])))
    records.sort(key=lambda r: r.ts)
    return records, errors


def write_trips(trips: Iterable[TripRecord], stream: IO[str], header: bool = True) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    if header:
        writer.writerow(TRIP_HEADER)
    for t in trips:
        writer.writerow((t.order_id, t.start_ts, t.end_ts, repr(t.pickup_lon), repr(t.pickup_lat),
                         repr(t.dropoff_lon), repr(t.dropoff_lat)))


def write_weather(records: Iterable[WeatherRecord], stream: IO[str], header: bool = True) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    if header:
        writer.writerow(WEATHER_HEADER)
    for r in records:
        writer.writerow((r.ts, repr(r.temp), repr(r.humidity), CONDITION_NAMES[r.condition]))
