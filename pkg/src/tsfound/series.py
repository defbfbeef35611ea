"""Time-series containers, standard scaling, left padding, and window sampling.

Conventions used throughout the package:

* padding is always on the left, so the most recent observations sit next to
  the forecast boundary;
* point-level masks are 1 at real observations and 0 at padding;
* scaling statistics come from valid (mask == 1) context positions only and
  use the population standard deviation, guarded below by ``STD_FLOOR``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

STD_FLOOR = 1e-6


class DataError(ValueError):
    """Malformed or unusable series data."""


@dataclass
class TimeSeries:
    """A univariate series with identity and frequency metadata."""

    id: str
    values: np.ndarray
    freq: str = "H"
    timestamps: Sequence[str] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or len(self.values) < 1:
            raise DataError(f"series {self.id!r}: values must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"series {self.id!r}: non-finite values are rejected; impute explicitly")

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class ScaledWindow:
    """A (context, future) training window in scaled space.

    ``mask`` marks the valid context positions (prefix of zeros, then ones);
    ``mean``/``std`` are the context statistics used for both segments.
    """

    context: np.ndarray
    future: np.ndarray
    mask: np.ndarray
    mean: float
    std: float
    series_id: str = ""


def standard_scale(values: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Z-score `values` using mean/std over mask==1 positions; padding maps to 0."""
    values = np.asarray(values, dtype=np.float64)
    mask = np.asarray(mask)
    valid = mask.astype(bool)
    if not valid.any():
        raise DataError("empty context")
    picked = values[valid]
    mean = float(picked.mean())
    std = float(picked.std())  # population std
    std = max(std, STD_FLOOR)
    scaled = np.where(valid, (values - mean) / std, 0.0)
    return scaled, mean, std


def inverse_scale(scaled: np.ndarray, mean: float, std: float) -> np.ndarray:
    if std <= 0:
        raise ValueError("std must be positive")
    return np.asarray(scaled, dtype=np.float64) * std + mean


def pad_left(values: np.ndarray, target_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Left-pad `values` with zeros to `target_len`; returns (padded, mask)."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if n > target_len:
        raise ValueError(f"cannot pad {n} values into length {target_len}; truncate first")
    padded = np.zeros(target_len, dtype=np.float64)
    mask = np.zeros(target_len, dtype=np.float64)
    if n:
        padded[target_len - n:] = values
        mask[target_len - n:] = 1.0
    return padded, mask


def sample_window(series: TimeSeries, context_len: int, horizon: int,
                  rng: np.random.Generator) -> ScaledWindow:
    """Draw one scaled (context, future) window at a uniform split point.

    The split must leave `horizon` points for the future and at least one real
    context point. Context statistics never see the future segment.
    """
    n = len(series)
    if n < horizon + 1:
        raise DataError(
            f"series {series.id!r}: length {n} < horizon+1 ({horizon + 1}); skipped")
    split = int(rng.integers(1, n - horizon + 1))
    return window_at(series, split, context_len, horizon)


def window_at(series: TimeSeries, split: int, context_len: int, horizon: int) -> ScaledWindow:
    """Deterministic window with the context ending just before `split`."""
    raw_ctx = series.values[max(0, split - context_len):split]
    future = series.values[split:split + horizon]
    if len(future) != horizon:
        raise DataError(f"series {series.id!r}: no full horizon after split {split}")
    padded, mask = pad_left(raw_ctx, context_len)
    scaled_ctx, mean, std = standard_scale(padded, mask)
    scaled_future = (future - mean) / std
    return ScaledWindow(context=scaled_ctx, future=scaled_future, mask=mask,
                        mean=mean, std=std, series_id=series.id)


# -- dataset ingestion ---------------------------------------------------------


def load_jsonl(path: str | Path) -> list[TimeSeries]:
    """Read one series per line: {"id": str, "freq": str, "target": [...]}. UTF-8."""
    out: list[TimeSeries] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if "target" not in obj:
                raise DataError(f"{path}:{lineno}: missing 'target' field")
            out.append(TimeSeries(id=str(obj.get("id", f"line{lineno}")),
                                  freq=str(obj.get("freq", "H")),
                                  values=np.asarray(obj["target"], dtype=np.float64)))
    if not out:
        raise DataError(f"{path}: no series found")
    return out


def save_jsonl(path: str | Path, series: Iterable[TimeSeries]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for ts in series:
            rec = {"id": ts.id, "freq": ts.freq, "target": [float(v) for v in ts.values]}
            fh.write(json.dumps(rec) + "\n")
            count += 1
    return count


def load_csv_long(path: str | Path, freq: str = "H") -> list[TimeSeries]:
    """Read long-format CSV with header series_id,timestamp,value. UTF-8."""
    groups: dict[str, list[tuple[str, float]]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"series_id", "timestamp", "value"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataError(f"{path}: expected header series_id,timestamp,value")
        for row in reader:
            try:
                value = float(row["value"])
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}: bad value {row['value']!r} "
                                f"for series {row['series_id']!r}") from exc
            groups.setdefault(row["series_id"], []).append((row["timestamp"], value))
    if not groups:
        raise DataError(f"{path}: no rows found")
    out = []
    for sid, rows in groups.items():
        rows.sort(key=lambda r: r[0])
        out.append(TimeSeries(id=sid, freq=freq,
                              values=np.asarray([v for _, v in rows], dtype=np.float64),
                              timestamps=[t for t, _ in rows]))
    return out


def iter_windows(series_list: Sequence[TimeSeries], context_len: int, horizon: int,
                 rng: np.random.Generator) -> Iterator[ScaledWindow]:
    """Endless sampler over a corpus; too-short series are skipped up front."""
    usable = [s for s in series_list if len(s) >= horizon + 1]
    if not usable:
        raise DataError(f"no series long enough for horizon {horizon}")
    while True:
        idx = int(rng.integers(0, len(usable)))
        yield sample_window(usable[idx], context_len, horizon, rng)
