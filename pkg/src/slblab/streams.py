"""Time-indexed sensor streams."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StreamSample:
    t: float
    features: np.ndarray
    clamped: bool = False  # target time fell outside the stream


class Stream:
    """Strictly time-ordered samples stored column-wise."""

    def __init__(self, times, values):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if len(times) != len(values):
            raise ValueError("times and values differ in length")
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("stream timestamps must be strictly increasing")
        self.times = times
        self.values = values

    def __len__(self):
        return len(self.times)

    def __getitem__(self, i) -> StreamSample:
        return StreamSample(float(self.times[i]), self.values[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def extent(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def nearest_index(self, t: float) -> tuple[int, bool]:
        """Index of the sample nearest ``t`` (ties go earlier) and a clamp flag."""
        if len(self) == 0:
            raise ValueError("empty stream")
        times = self.times
        if t <= times[0]:
            return 0, bool(t < times[0])
        if t >= times[-1]:
            return len(times) - 1, bool(t > times[-1])
        j = int(np.searchsorted(times, t, side="left"))
        # times[j-1] < t <= times[j]
        if times[j] - t < t - times[j - 1]:
            return j, False
        return j - 1, False
