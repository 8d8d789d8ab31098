"""Spatial gridding of pick-up events into zone-by-slot demand counts."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from ridecnn.ingest import TripRecord


@dataclass(frozen=True)
class GridSpec:
    lon_min: float
    lon_max: float
    lat_min: float
    lat_max: float
    rows: int = 10
    cols: int = 10

    def __post_init__(self):
        if not self.lon_min < self.lon_max:
            raise ValueError(f"lon_min ({self.lon_min}) must be below lon_max ({self.lon_max})")
        if not self.lat_min < self.lat_max:
            raise ValueError(f"lat_min ({self.lat_min}) must be below lat_max ({self.lat_max})")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and one column")

    @property
    def zones(self) -> int:
        return self.rows * self.cols

    def lon_edges(self) -> np.ndarray:
        return np.linspace(self.lon_min, self.lon_max, self.cols + 1)

    def lat_edges(self) -> np.ndarray:
        """Latitude edges from north to south (descending)."""
        return np.linspace(self.lat_max, self.lat_min, self.rows + 1)


@dataclass(frozen=True)
class TimeSpec:
    start_epoch: int
    num_slots: int
    slot_seconds: int = 600

    def __post_init__(self):
        if self.slot_seconds <= 0:
            raise ValueError("slot_seconds must be positive")
        if self.num_slots < 1:
            raise ValueError("num_slots must be at least 1")

    def slot_start(self, slot: int) -> int:
        return self.start_epoch + slot * self.slot_seconds

    @property
    def end_epoch(self) -> int:
        return self.slot_start(self.num_slots)


@dataclass
class DropStats:
    out_of_time: int = 0
    out_of_bounds: int = 0

    @property
    def total(self) -> int:
        return self.out_of_time + self.out_of_bounds

    def __add__(self, other: "DropStats") -> "DropStats":
        return DropStats(self.out_of_time + other.out_of_time, self.out_of_bounds + other.out_of_bounds)


@dataclass
class DemandSeries:
    spec: GridSpec
    time: TimeSpec
    counts: np.ndarray  # (num_slots, rows, cols) int64

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        expected = (self.time.num_slots, self.spec.rows, self.spec.cols)
        if self.counts.shape != expected:
            raise ValueError(f"counts shape {self.counts.shape} does not match {expected}")
        if (self.counts < 0).any():
            raise ValueError("demand counts must be non-negative")

    def __eq__(self, other):
        if not isinstance(other, DemandSeries):
            return NotImplemented
        return self.spec == other.spec and self.time == other.time and np.array_equal(self.counts, other.counts)

    def flat(self, slot: int) -> np.ndarray:
        """Demand of one slot as a vector in zone-number order."""
        return self.counts[slot].reshape(-1)


def _bin(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    # half-open [e_j, e_j+1), last interval closed; -1 when outside
    idx = np.searchsorted(edges, values, side="right") - 1
    idx = np.where(values == edges[-1], len(edges) - 2, idx)
    return np.where((values >= edges[0]) & (values <= edges[-1]), idx, -1)


def locate_cells(lons, lats, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``locate_cell``: 1-based (row, col) arrays, 0 where out of bounds."""
    lons = np.asarray(lons, dtype=float)
    lats = np.asarray(lats, dtype=float)
    col = _bin(lons, spec.lon_edges())
    row = _bin(-lats, -spec.lat_edges())
    inside = (col >= 0) & (row >= 0)
    return np.where(inside, row + 1, 0), np.where(inside, col + 1, 0)


def locate_cell(lon: float, lat: float, spec: GridSpec) -> tuple[int, int] | None:
    """Return the 1-based (row, col) holding a point, row 1 at the north edge, or None."""
    row, col = locate_cells([lon], [lat], spec)
    if row[0] == 0:
        return None
    return int(row[0]), int(col[0])


def zone_number(row: int, col: int, cols: int = 10, rows: int = 10) -> int:
    if not (1 <= row <= rows and 1 <= col <= cols):
        raise IndexError(f"cell ({row}, {col}) outside a {rows}x{cols} grid")
    return (row - 1) * cols + col


def zone_cell(zone: int, cols: int = 10, rows: int = 10) -> tuple[int, int]:
    if not 1 <= zone <= rows * cols:
        raise IndexError(f"zone {zone} outside [1, {rows * cols}]")
    return (zone - 1) // cols + 1, (zone - 1) % cols + 1


def _count_block(start_ts, lons, lats, spec: GridSpec, time: TimeSpec):
    slot = (start_ts - time.start_epoch) // time.slot_seconds
    in_time = (start_ts >= time.start_epoch) & (slot < time.num_slots)
    row, col = locate_cells(lons, lats, spec)
    in_space = row > 0
    keep = in_time & in_space
    flat = (slot[keep] * spec.rows + (row[keep] - 1)) * spec.cols + (col[keep] - 1)
    counts = np.bincount(flat, minlength=time.num_slots * spec.zones).astype(np.int64)
    drops = DropStats(int((~in_time).sum()), int((in_time & ~in_space).sum()))
    return counts, drops


def build_demand_series(trips: Sequence[TripRecord], spec: GridSpec, time: TimeSpec,
                        workers: int = 1) -> tuple[DemandSeries, DropStats]:
    """Count pick-ups per (slot, row, col).

    Trips outside the time range count as ``out_of_time`` even if they are
    also outside the bounding box. With ``workers > 1`` the trips are split
    into contiguous chunks whose count tensors are summed; integer addition
    makes the result independent of the split.
    """
    n = len(trips)
    start_ts = np.fromiter((t.start_ts for t in trips), dtype=np.int64, count=n)
    lons = np.fromiter((t.pickup_lon for t in trips), dtype=float, count=n)
    lats = np.fromiter((t.pickup_lat for t in trips), dtype=float, count=n)

    bounds = np.linspace(0, n, max(1, workers) + 1).astype(int)
    chunks = [(start_ts[a:b], lons[a:b], lats[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda c: _count_block(*c, spec, time), chunks))
    else:
        parts = [_count_block(*c, spec, time) for c in chunks]

    counts = np.zeros(time.num_slots * spec.zones, dtype=np.int64)
    drops = DropStats()
    for part_counts, part_drops in parts:
        counts += part_counts
        drops = drops + part_drops
    return DemandSeries(spec, time, counts.reshape(time.num_slots, spec.rows, spec.cols)), drops


_SERIES_KEYS = ("lon_min", "lon_max", "lat_min", "lat_max", "rows", "cols", "start_epoch", "slot_seconds", "num_slots")


def write_series(series: DemandSeries, stream: IO[str]) -> None:
    s, t = series.spec, series.time
    bounds = (repr(float(v)) for v in (s.lon_min, s.lon_max, s.lat_min, s.lat_max))
    values = (*bounds, s.rows, s.cols, t.start_epoch, t.slot_seconds, t.num_slots)
    stream.write("# demand " + " ".join(f"{k}={v}" for k, v in zip(_SERIES_KEYS, values)) + "\n")
    stream.write("slot_index,row,col,count\n")
    for slot, row, col in np.argwhere(series.counts > 0):
        stream.write(f"{slot},{row + 1},{col + 1},{series.counts[slot, row, col]}\n")


def read_series(stream: IO[str]) -> DemandSeries:
    first = stream.readline()
    if not first.startswith("# demand "):
        raise ValueError("missing '# demand' header line")
    fields = dict(item.split("=", 1) for item in first[len("# demand "):].split())
    if set(fields) != set(_SERIES_KEYS):
        raise ValueError(f"demand header has keys {sorted(fields)}, expected {sorted(_SERIES_KEYS)}")
    spec = GridSpec(float(fields["lon_min"]), float(fields["lon_max"]), float(fields["lat_min"]),
                    float(fields["lat_max"]), int(fields["rows"]), int(fields["cols"]))
    time = TimeSpec(int(fields["start_epoch"]), int(fields["num_slots"]), int(fields["slot_seconds"]))
    if stream.readline().strip() != "slot_index,row,col,count":
        raise ValueError("missing column header")
    counts = np.zeros((time.num_slots, spec.rows, spec.cols), dtype=np.int64)
    for line in stream:
        if line.strip():
            slot, row, col, count = (int(v) for v in line.split(","))
            counts[slot, row - 1, col - 1] = count
    return DemandSeries(spec, time, counts)
