"""Data pipeline: ingestion, gap-filling, chronological splitting,
min-max scaling, sliding-window sequentialization, and grid construction.

File formats:

* ``sensors.csv``: header ``date,<station_id>,...``; ISO-8601 dates, one
  row per day; an empty cell marks a missing measurement.
* ``field.bin``: magic ``FLDS``, u32 day count N, u32 point count P,
  N*P little-endian float64 field values, then P (lon, lat) pairs in raw
  degrees.
* ``grid.csv``: header ``lon,lat``, coordinates in degrees.
"""

from __future__ import annotations

import csv
import datetime
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from tron.errors import (
    ConfigError,
    DataError,
    DegenerateChannelError,
    DimensionError,
    GridError,
    UnfillableGapError,
    UnfittedScalerError,
)
from tron.model import QueryGrid

EPOCH = datetime.date(2001, 1, 1)


def _dates_from_ordinals(ordinals: np.ndarray) -> list[datetime.date]:
    return [datetime.date.fromordinal(int(o)) for o in ordinals]


@dataclass
class SensorSeries:
    """Contiguous daily multivariate sensor counts (days x stations)."""

    dates: list[datetime.date]
    counts: np.ndarray          # (N, S), may contain NaN before gap_fill
    station_ids: list[str]

    def __post_init__(self):
        self.counts = np.ascontiguousarray(self.counts, dtype=np.float64)
        n = len(self.dates)
        if self.counts.shape != (n, len(self.station_ids)):
            raise DimensionError(
                f"counts shape {self.counts.shape} does not match "
                f"{n} dates x {len(self.station_ids)} stations")
        for prev, cur in zip(self.dates, self.dates[1:]):
            if (cur - prev).days != 1:
                raise DataError(
                    f"sensor dates must be contiguous; gap between {prev} and {cur}")

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_sensors(self) -> int:
        return len(self.station_ids)


@dataclass
class FieldSeries:
    """Daily field values on a fixed query grid, aligned with a SensorSeries."""

    dates: list[datetime.date]
    values: np.ndarray          # (N, P), physical units
    grid: QueryGrid

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.dates), self.grid.n_points):
            raise DimensionError(
                f"field shape {self.values.shape} does not match "
                f"{len(self.dates)} dates x {self.grid.n_points} grid points")


@dataclass
class SequencedDataset:
    """Windowed inputs (N', T, S) paired with final-step field targets (N', P)."""

    inputs: np.ndarray
    targets: np.ndarray
    window_origin_dates: list[datetime.date]

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0] or \
                self.inputs.shape[0] != len(self.window_origin_dates):
            raise DimensionError("window count mismatch between inputs and targets")

    @property
    def n_windows(self) -> int:
        return self.inputs.shape[0]

    @property
    def seq_len(self) -> int:
        return self.inputs.shape[1]


# -- gap filling --

def gap_fill(series: SensorSeries, max_gap: int = 14,
             poly_order: int = 3) -> SensorSeries:
    """Fill NaN runs per station with a least-squares polynomial.

    Each gap is fit over the nearest 2*(poly_order+1) valid days; gaps
    longer than ``max_gap`` are an error.
    """
    counts = series.counts.copy()
    n_days = series.n_days
    for s, station in enumerate(series.station_ids):
        col = counts[:, s]
        missing = np.isnan(col)
        if not missing.any():
            continue
        valid_idx = np.flatnonzero(~missing)
        if valid_idx.size < poly_order + 1:
            raise UnfillableGapError(
                f"station {station}: only {valid_idx.size} valid days, "
                f"cannot fit order-{poly_order} polynomial")
        gap_starts = np.flatnonzero(missing & ~np.roll(missing, 1))
        if missing[0]:
            gap_starts = np.unique(np.concatenate([[0], gap_starts]))
        for g0 in gap_starts:
            g1 = g0
            while g1 + 1 < n_days and missing[g1 + 1]:
                g1 += 1
            length = g1 - g0 + 1
            if length > max_gap:
                raise UnfillableGapError(
                    f"station {station}: gap of {length} days "
                    f"({series.dates[g0]}..{series.dates[g1]}) exceeds "
                    f"max_gap={max_gap}")
            # nearest valid days by distance to the gap edges; ties by index
            dist = np.minimum(np.abs(valid_idx - g0), np.abs(valid_idx - g1))
            order = np.argsort(dist, kind="stable")
            support = valid_idx[order[:2 * (poly_order + 1)]]
            if support.size < poly_order + 1:
                raise UnfillableGapError(
                    f"station {station}: gap at {series.dates[g0]} has only "
                    f"{support.size} valid neighbors for order {poly_order}")
            poly = np.polynomial.Polynomial.fit(
                support.astype(float), col[support], deg=poly_order)
            fill_at = np.arange(g0, g1 + 1, dtype=float)
            col[g0:g1 + 1] = poly(fill_at)
        counts[:, s] = col
    return SensorSeries(series.dates, counts, list(series.station_ids))


# -- chronological partitioning --

def chronological_split(n_days: int, test_days: int = 365) -> tuple[int, int, int]:
    """Day counts (train, val, test): the most recent ``test_days`` are the
    test block, the rest splits evenly with the odd day going to validation."""
    if n_days <= test_days + 2:
        raise ConfigError(
            f"need more than {test_days + 2} days to split, got {n_days}")
    remaining = n_days - test_days
    train = remaining // 2
    val = remaining - train
    return train, val, test_days


def sliding_window(counts: np.ndarray, targets: np.ndarray,
                   dates: list[datetime.date], seq_len: int) -> SequencedDataset:
    """Overlapping windows of ``seq_len`` rows; target is the field at the
    final day of each window. N' = N - T + 1."""
    n = counts.shape[0]
    if seq_len > n:
        raise DataError(
            f"window length {seq_len} exceeds partition length {n}")
    n_windows = n - seq_len + 1
    inputs = np.empty((n_windows, seq_len, counts.shape[1]))
    for i in range(n_windows):
        inputs[i] = counts[i:i + seq_len]
    out_targets = np.ascontiguousarray(targets[seq_len - 1:])
    return SequencedDataset(inputs, out_targets, list(dates[:n_windows]))


# -- scaling --

class Scaler:
    """Min-max normalization fitted on training rows only.

    Sensor channels scale per station; field values share one global
    pair; coordinate axes carry their grid ranges for query normalization.
    Values outside the fitted range map outside [0, 1] and are not clamped.
    """

    def __init__(self):
        self.sensor_min = None
        self.sensor_max = None
        self.field_min = None
        self.field_max = None
        self.lon_range = (-180.0, 180.0)
        self.lat_range = (-90.0, 90.0)

    @property
    def fitted(self) -> bool:
        return self.sensor_min is not None

    def fit(self, train_counts: np.ndarray, train_field: np.ndarray,
            lon_range=(-180.0, 180.0), lat_range=(-90.0, 90.0)) -> "Scaler":
        self.sensor_min = train_counts.min(axis=0)
        self.sensor_max = train_counts.max(axis=0)
        for s in range(train_counts.shape[1]):
            if self.sensor_max[s] <= self.sensor_min[s]:
                raise DegenerateChannelError(
                    f"sensor channel {s} has max == min; cannot scale")
        self.field_min = float(train_field.min())
        self.field_max = float(train_field.max())
        if self.field_max <= self.field_min:
            raise DegenerateChannelError("field channel has max == min; cannot scale")
        self.lon_range = (float(lon_range[0]), float(lon_range[1]))
        self.lat_range = (float(lat_range[0]), float(lat_range[1]))
        return self

    def _require_fit(self):
        if not self.fitted:
            raise UnfittedScalerError("scaler used before fit")

    def transform_counts(self, counts: np.ndarray) -> np.ndarray:
        self._require_fit()
        return (counts - self.sensor_min) / (self.sensor_max - self.sensor_min)

    def transform_field(self, values: np.ndarray) -> np.ndarray:
        self._require_fit()
        return (values - self.field_min) / (self.field_max - self.field_min)

    def inverse_transform_field(self, values: np.ndarray) -> np.ndarray:
        self._require_fit()
        return values * (self.field_max - self.field_min) + self.field_min

    def normalize_coords(self, lon_deg: np.ndarray, lat_deg: np.ndarray) -> np.ndarray:
        lon = (lon_deg - self.lon_range[0]) / (self.lon_range[1] - self.lon_range[0])
        lat = (lat_deg - self.lat_range[0]) / (self.lat_range[1] - self.lat_range[0])
        return np.stack([lon, lat], axis=1)

    def to_state(self) -> dict:
        self._require_fit()
        return {
            "sensor_min": [float(v) for v in self.sensor_min],
            "sensor_max": [float(v) for v in self.sensor_max],
            "field_min": self.field_min,
            "field_max": self.field_max,
            "lon_range": list(self.lon_range),
            "lat_range": list(self.lat_range),
        }

    @classmethod
    def from_state(cls, state: dict) -> "Scaler":
        scaler = cls()
        scaler.sensor_min = np.asarray(state["sensor_min"], dtype=np.float64)
        scaler.sensor_max = np.asarray(state["sensor_max"], dtype=np.float64)
        scaler.field_min = float(state["field_min"])
        scaler.field_max = float(state["field_max"])
        scaler.lon_range = tuple(state["lon_range"])
        scaler.lat_range = tuple(state["lat_range"])
        return scaler


# -- grids --

def make_grid(lat_step: float, lon_step: float,
              lat_range=(-90.0, 90.0), lon_range=(-180.0, 180.0)) -> QueryGrid:
    """Uniform global grid, endpoints inclusive, latitude-outer row-major
    ordering; coordinates normalized to [0, 1] per axis."""
    lat_span = lat_range[1] - lat_range[0]
    lon_span = lon_range[1] - lon_range[0]
    n_lat = lat_span / lat_step
    n_lon = lon_span / lon_step
    if abs(n_lat - round(n_lat)) > 1e-9 or abs(n_lon - round(n_lon)) > 1e-9:
        raise GridError(
            f"steps ({lat_step}, {lon_step}) do not evenly divide ranges "
            f"({lat_span}, {lon_span})")
    lats = lat_range[0] + lat_step * np.arange(int(round(n_lat)) + 1)
    lons = lon_range[0] + lon_step * np.arange(int(round(n_lon)) + 1)
    lat_grid = np.repeat(lats, lons.size)
    lon_grid = np.tile(lons, lats.size)
    coords = np.stack([
        (lon_grid - lon_range[0]) / lon_span,
        (lat_grid - lat_range[0]) / lat_span,
    ], axis=1)
    return QueryGrid(coords, lon_deg=lon_grid, lat_deg=lat_grid)


# -- pipeline --

@dataclass
class PreparedData:
    train: SequencedDataset
    val: SequencedDataset
    test: SequencedDataset
    scaler: Scaler
    grid: QueryGrid


def prepare(sensors: SensorSeries, field: FieldSeries, seq_len: int,
            test_days: int = 365) -> PreparedData:
    """Split chronologically, fit the scaler on the training block only,
    normalize, and window each partition independently."""
    if sensors.n_days != len(field.dates):
        raise DataError(
            f"sensor series has {sensors.n_days} days but field has "
            f"{len(field.dates)}")
    n_train, n_val, n_test = chronological_split(sensors.n_days, test_days)
    bounds = [(0, n_train), (n_train, n_train + n_val),
              (n_train + n_val, sensors.n_days)]

    scaler = Scaler().fit(sensors.counts[:n_train], field.values[:n_train])
    counts_n = scaler.transform_counts(sensors.counts)
    field_n = scaler.transform_field(field.values)

    parts = []
    for lo, hi in bounds:
        if hi - lo < seq_len:
            raise DataError(
                f"partition of {hi - lo} days is shorter than window {seq_len}")
        parts.append(sliding_window(counts_n[lo:hi], field_n[lo:hi],
                                    sensors.dates[lo:hi], seq_len))
    return PreparedData(train=parts[0], val=parts[1], test=parts[2],
                        scaler=scaler, grid=field.grid)


# -- file I/O --

def write_sensors_csv(path, series: SensorSeries) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + list(series.station_ids))
        for i, date in enumerate(series.dates):
            row = [date.isoformat()]
            for v in series.counts[i]:
                row.append("" if np.isnan(v) else repr(float(v)))
            writer.writerow(row)


def read_sensors_csv(path) -> SensorSeries:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty sensors file") from None
        if not header or header[0] != "date":
            raise DataError(f"{path}: first column must be 'date'")
        station_ids = header[1:]
        if not station_ids:
            raise DataError(f"{path}: no station columns")
        dates, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            try:
                dates.append(datetime.date.fromisoformat(row[0]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad date {row[0]!r}") from exc
            rows.append([float(c) if c != "" else np.nan for c in row[1:]])
    return SensorSeries(dates, np.asarray(rows, dtype=np.float64), station_ids)


FIELD_MAGIC = b"FLDS"


def write_field_bin(path, field: FieldSeries) -> None:
    if field.grid.lon_deg is None or field.grid.lat_deg is None:
        raise DataError("field grid lacks raw degree coordinates")
    n, p = field.values.shape
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<II", n, p))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
        pairs = np.stack([field.grid.lon_deg, field.grid.lat_deg], axis=1)
        fh.write(np.ascontiguousarray(pairs, dtype="<f8").tobytes())


def read_field_bin(path, start_date: datetime.date = EPOCH,
                   lon_range=(-180.0, 180.0), lat_range=(-90.0, 90.0)) -> FieldSeries:
    raw = Path(path).read_bytes()
    if raw[:4] != FIELD_MAGIC:
        raise DataError(f"{path}: bad magic bytes, not a field file")
    n, p = struct.unpack_from("<II", raw, 4)
    expected = 12 + 8 * n * p + 16 * p
    if len(raw) != expected:
        raise DataError(
            f"{path}: file length {len(raw)} does not match header "
            f"(expected {expected})")
    values = np.frombuffer(raw, dtype="<f8", count=n * p, offset=12)
    values = values.reshape(n, p).copy()
    pairs = np.frombuffer(raw, dtype="<f8", count=2 * p,
                          offset=12 + 8 * n * p).reshape(p, 2).copy()
    lon_deg, lat_deg = pairs[:, 0], pairs[:, 1]
    coords = np.stack([
        (lon_deg - lon_range[0]) / (lon_range[1] - lon_range[0]),
        (lat_deg - lat_range[0]) / (lat_range[1] - lat_range[0]),
    ], axis=1)
    grid = QueryGrid(coords, lon_deg=lon_deg, lat_deg=lat_deg)
    dates = [start_date + datetime.timedelta(days=i) for i in range(n)]
    return FieldSeries(dates, values, grid)


def write_grid_csv(path, grid: QueryGrid) -> None:
    if grid.lon_deg is None or grid.lat_deg is None:
        raise DataError("grid lacks raw degree coordinates")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lon", "lat"])
        for lon, lat in zip(grid.lon_deg, grid.lat_deg):
            writer.writerow([repr(float(lon)), repr(float(lat))])


def read_grid_csv(path, lon_range=(-180.0, 180.0), lat_range=(-90.0, 90.0)) -> QueryGrid:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["lon", "lat"]:
            raise DataError(f"{path}: expected header 'lon,lat'")
        pairs = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 cells")
            pairs.append((float(row[0]), float(row[1])))
    if not pairs:
        raise DataError(f"{path}: no query points")
    arr = np.asarray(pairs, dtype=np.float64)
    lon_deg, lat_deg = arr[:, 0], arr[:, 1]
    coords = np.stack([
        (lon_deg - lon_range[0]) / (lon_range[1] - lon_range[0]),
        (lat_deg - lat_range[0]) / (lat_range[1] - lat_range[0]),
    ], axis=1)
    return QueryGrid(coords, lon_deg=lon_deg, lat_deg=lat_deg)


def save_prepared(out_dir, prepared: PreparedData) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", prepared.train), ("val", prepared.val),
                       ("test", prepared.test)):
        np.savez(out / f"{name}.npz",
                 inputs=part.inputs, targets=part.targets,
                 origins=np.array([d.toordinal() for d in part.window_origin_dates]))
    import json
    (out / "scaler.json").write_text(
        json.dumps(prepared.scaler.to_state(), sort_keys=True, indent=1) + "\n")
    np.savez(out / "grid.npz", coords=prepared.grid.coords,
             lon_deg=prepared.grid.lon_deg, lat_deg=prepared.grid.lat_deg)


def load_prepared(out_dir) -> PreparedData:
    import json
    out = Path(out_dir)
    parts = {}
    for name in ("train", "val", "test"):
        path = out / f"{name}.npz"
        if not path.exists():
            raise DataError(f"{path}: missing prepared partition")
        with np.load(path) as npz:
            parts[name] = SequencedDataset(
                npz["inputs"], npz["targets"],
                _dates_from_ordinals(npz["origins"]))
    scaler = Scaler.from_state(json.loads((out / "scaler.json").read_text()))
    with np.load(out / "grid.npz") as npz:
        grid = QueryGrid(npz["coords"], lon_deg=npz["lon_deg"],
                         lat_deg=npz["lat_deg"])
    return PreparedData(train=parts["train"], val=parts["val"],
                        test=parts["test"], scaler=scaler, grid=grid)
