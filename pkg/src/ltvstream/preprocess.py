"""One-pass preprocessing: streaming ordinal encoding and online scalers.

The encoder assigns integer codes to category values in order of first
occurrence, reserving code 0 for unknown/empty values, so codes can index a
pre-provisioned parameter array without ever going out of bounds. Scalers
keep O(1) state: Welford moments for the standard scaler, P-squared quantile
markers for the robust one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "UNKNOWN_CODE",
    "EncoderCapacityError",
    "StreamingOrdinalEncoder",
    "BatchOrdinalEncoder",
    "P2Quantile",
    "StandardScaler",
    "RobustScaler",
    "make_scaler",
]

UNKNOWN_CODE = 0

# Values treated as "missing": permanently mapped to the unknown code and
# never registered.
_MISSING = (None, "")


class EncoderCapacityError(RuntimeError):
    """Raised when a new category value would not fit the provisioned space.

    Carries the offending value; the caller decides the refresh policy
    (grow the index space and retrain, or drop the value).
    """

    def __init__(self, value, capacity: int):
        super().__init__(
            f"encoder capacity {capacity} exhausted by new category value {value!r}"
        )
        self.value = value
        self.capacity = capacity


@dataclass
class StreamingOrdinalEncoder:
    """Chronological ordinal encoder for one categorical feature.

    Codes are consecutive integers 1..size in first-occurrence order; code 0
    is reserved for unknown/empty values. By default the first occurrence of
    a value is *emitted* as unknown and only registered for subsequent rows;
    set ``emit_fresh_code=True`` to emit the fresh code immediately.
    """

    capacity: int = 1024
    emit_fresh_code: bool = False
    _mapping: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.capacity < 2:
            raise ValueError("capacity must be >= 2 (code 0 is reserved)")

    @property
    def size(self) -> int:
        return len(self._mapping)

    def encode_one(self, value) -> int:
        if value in _MISSING:
            return UNKNOWN_CODE
        code = self._mapping.get(value)
        if code is not None:
            return code
        fresh = len(self._mapping) + 1
        if fresh >= self.capacity:
            raise EncoderCapacityError(value, self.capacity)
        self._mapping[value] = fresh
        return fresh if self.emit_fresh_code else UNKNOWN_CODE

    def encode(self, values: Iterable) -> np.ndarray:
        return np.fromiter(
            (self.encode_one(v) for v in values), dtype=np.int64, count=-1
        )

    def to_table(self) -> list[tuple]:
        """(value, code) pairs in code order, for seeding a batch encoder."""
        return sorted(self._mapping.items(), key=lambda item: item[1])

    def write_table(self, path) -> None:
        """Plain-text audit dump: one ``value<TAB>code`` line, code order."""
        lines = [f"{value}\t{code}" for value, code in self.to_table()]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


@dataclass(frozen=True)
class BatchOrdinalEncoder:
    """Classic batch ordinal encoder over a fixed value->code table.

    Unknown values map to code 0. Seeding it from
    :meth:`StreamingOrdinalEncoder.to_table` reproduces the streaming scheme
    on already-seen values.
    """

    mapping: dict

    @classmethod
    def from_table(cls, table: Sequence[tuple]) -> "BatchOrdinalEncoder":
        return cls(mapping=dict(table))

    def encode(self, values: Iterable) -> np.ndarray:
        return np.fromiter(
            (self.mapping.get(v, UNKNOWN_CODE) for v in values),
            dtype=np.int64,
            count=-1,
        )


class P2Quantile:
    """P-squared streaming quantile estimator (Jain & Chlamtac, 1985).

    Five markers track (min, p/2, p, (1+p)/2, max) with parabolic height
    adjustment; memory is O(1) regardless of stream length. Exact for the
    first five observations, approximate after.
    """

    def __init__(self, prob: float = 0.5):
        if not 0.0 < prob < 1.0:
            raise ValueError("prob must be in (0, 1)")
        self.prob = prob
        self.count = 0
        self._q = np.zeros(5)       # marker heights
        self._n = np.arange(1.0, 6.0)  # marker positions

    def update(self, x: float) -> None:
        self.count += 1
        if self.count <= 5:
            self._q[self.count - 1] = x
            if self.count == 5:
                self._q.sort()
            return

        q, n = self._q, self._n
        if x < q[0]:
            q[0] = x
            k = 0
        elif x >= q[4]:
            q[4] = x
            k = 3
        else:
            k = int(np.searchsorted(q, x, side="right")) - 1
            k = min(k, 3)
        n[k + 1:] += 1.0

        p = self.prob
        total = float(self.count)
        desired = np.array(
            [
                1.0,
                1.0 + (total - 1.0) * p / 2.0,
                1.0 + (total - 1.0) * p,
                1.0 + (total - 1.0) * (1.0 + p) / 2.0,
                total,
            ]
        )
        for i in (1, 2, 3):
            d = desired[i] - n[i]
            if (d >= 1.0 and n[i + 1] - n[i] > 1.0) or (
                d <= -1.0 and n[i - 1] - n[i] < -1.0
            ):
                d = 1.0 if d > 0 else -1.0
                # parabolic prediction, falling back to linear when it would
                # break marker monotonicity
                cand = q[i] + d / (n[i + 1] - n[i - 1]) * (
                    (n[i] - n[i - 1] + d) * (q[i + 1] - q[i]) / (n[i + 1] - n[i])
                    + (n[i + 1] - n[i] - d) * (q[i] - q[i - 1]) / (n[i] - n[i - 1])
                )
                if q[i - 1] < cand < q[i + 1]:
                    q[i] = cand
                else:
                    j = i + int(d)
                    q[i] = q[i] + d * (q[j] - q[i]) / (n[j] - n[i])
                n[i] += d

    def quantile(self) -> float:
        if self.count == 0:
            return 0.0
        if self.count <= 5:
            # exact while the buffer still holds the raw observations
            vals = np.sort(self._q[: self.count])
            pos = self.prob * (self.count - 1)
            lo = int(np.floor(pos))
            hi = min(lo + 1, self.count - 1)
            return float(vals[lo] + (pos - lo) * (vals[hi] - vals[lo]))
        return float(self._q[2])


_SPREAD_FLOOR = 1e-12


class StandardScaler:
    """Online (x - mean) / std scaler backed by Welford accumulators."""

    def __init__(self):
        self.count = 0
        self._mean = 0.0
        self._m2 = 0.0

    @property
    def center(self) -> float:
        return self._mean

    @property
    def spread(self) -> float:
        if self.count < 2:
            return 0.0
        return float(np.sqrt(self._m2 / (self.count - 1)))

    def scale_update(self, x: float) -> float:
        """Scale with current statistics, then fold ``x`` in (predict-then-update)."""
        scaled = self.scale(x)
        self.count += 1
        delta = x - self._mean
        self._mean += delta / self.count
        self._m2 += delta * (x - self._mean)
        return scaled

    def scale(self, x: float) -> float:
        spread = self.spread
        if self.count == 0 or spread <= _SPREAD_FLOOR:
            # no location/spread information yet: defined fallback
            return 0.0
        return (x - self._mean) / spread

    def unscale(self, x_scaled: float) -> float:
        spread = self.spread
        if spread <= _SPREAD_FLOOR:
            return self._mean
        return self._mean + x_scaled * spread

    def snapshot(self) -> tuple[float, float]:
        """(center, spread) affine frozen at the current state."""
        return self.center, self.spread


class RobustScaler:
    """Online (x - median) / IQR scaler using P-squared quantile trackers.

    Bounded influence: a bounded fraction of arbitrarily large outliers moves
    the median estimate only marginally, unlike mean/std scaling.
    """

    def __init__(self):
        self.count = 0
        self._q25 = P2Quantile(0.25)
        self._q50 = P2Quantile(0.50)
        self._q75 = P2Quantile(0.75)

    @property
    def center(self) -> float:
        return self._q50.quantile()

    @property
    def spread(self) -> float:
        if self.count < 2:
            return 0.0
        return max(self._q75.quantile() - self._q25.quantile(), 0.0)

    def scale_update(self, x: float) -> float:
        scaled = self.scale(x)
        self.count += 1
        self._q25.update(x)
        self._q50.update(x)
        self._q75.update(x)
        return scaled

    def scale(self, x: float) -> float:
        spread = self.spread
        if self.count == 0 or spread <= _SPREAD_FLOOR:
            return 0.0
        return (x - self.center) / spread

    def unscale(self, x_scaled: float) -> float:
        spread = self.spread
        if spread <= _SPREAD_FLOOR:
            return self.center
        return self.center + x_scaled * spread

    def snapshot(self) -> tuple[float, float]:
        return self.center, self.spread


def make_scaler(kind: str):
    if kind == "standard":
        return StandardScaler()
    if kind == "robust":
        return RobustScaler()
    raise ValueError(f"unknown scaler kind {kind!r} (expected 'standard' or 'robust')")
