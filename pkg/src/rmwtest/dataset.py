"""Two-arm survival data and its reduction to a risk table.

The risk table is the single summary that every downstream statistic
consumes: one row per distinct event time, carrying at-risk counts, event
counts, and the pooled Kaplan-Meier survival just before that time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DataError

CSV_HEADER = ("time", "event", "arm")


@dataclass(frozen=True)
class SurvivalRecord:
    """One subject: observed time in months, event flag, arm label.

    ``event`` is True when the event was observed and False when the subject
    was censored at ``time``. ``arm`` is 0 for control, 1 for experimental.
    """

    time: float
    event: bool
    arm: int

    def __post_init__(self) -> None:
        if not (isinstance(self.time, (int, float)) and math.isfinite(self.time) and self.time >= 0):
            raise DataError(f"time must be finite and >= 0, got {self.time!r}")
        if self.event not in (0, 1):
            raise DataError(f"event must be 0 or 1, got {self.event!r}")
        if self.arm not in (0, 1):
            raise DataError(f"arm must be 0 or 1, got {self.arm!r}")


@dataclass(frozen=True)
class RiskTableRow:
    """Risk-set summary at one distinct event time.

    ``km_left`` is the pooled Kaplan-Meier estimate of survival just prior
    to ``tau``, i.e. the product of (1 - d/n) over strictly earlier rows.
    """

    tau: float
    n_total: int
    n_arm1: int
    d_total: int
    d_arm1: int
    km_left: float

    def __post_init__(self) -> None:
        if not 0 <= self.d_arm1 <= self.d_total <= self.n_total:
            raise DataError(
                f"need 0 <= d_arm1 <= d_total <= n_total at tau={self.tau}, got "
                f"d_arm1={self.d_arm1}, d_total={self.d_total}, n_total={self.n_total}"
            )
        if not 0 <= self.n_arm1 <= self.n_total:
            raise DataError(
                f"need 0 <= n_arm1 <= n_total at tau={self.tau}, got "
                f"n_arm1={self.n_arm1}, n_total={self.n_total}"
            )
        if not 0.0 <= self.km_left <= 1.0:
            raise DataError(f"km_left must lie in [0, 1], got {self.km_left}")


class RiskArrays(NamedTuple):
    """Columnar risk table used on hot paths; same content as the row form."""

    tau: np.ndarray
    n_total: np.ndarray
    n_arm1: np.ndarray
    d_total: np.ndarray
    d_arm1: np.ndarray
    km_left: np.ndarray

    def __len__(self) -> int:
        return len(self.tau)


def risk_arrays(time: np.ndarray, event: np.ndarray, arm: np.ndarray) -> RiskArrays:
    """Build the columnar risk table from raw subject-level columns.

    Ties follow the standard right-censoring convention: a subject censored
    at an event time is still at risk for events at that time. Only times
    with at least one event get a row; censoring-only times contribute
    through the at-risk counts alone.
    """
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event, dtype=bool)
    arm = np.asarray(arm)
    if time.size == 0:
        raise DataError("no data")
    if not np.all(np.isfinite(time)) or np.any(time < 0):
        raise DataError("time must be finite and >= 0")
    if not np.all((arm == 0) | (arm == 1)):
        raise DataError("arm must be 0 or 1")
    if not event.any():
        raise DataError("no events")
    if arm.min() == arm.max():
        raise DataError("one arm missing")

    order = np.argsort(time, kind="stable")
    t_sorted = time[order]
    e_sorted = event[order]
    a_sorted = arm[order].astype(np.float64)

    event_times = t_sorted[e_sorted]
    event_arm1 = a_sorted[e_sorted]
    tau, d_total = np.unique(event_times, return_counts=True)
    d_arm1 = np.bincount(
        np.searchsorted(tau, event_times), weights=event_arm1, minlength=len(tau)
    )

    # subjects with time >= tau remain at risk (exact value equality on ties)
    n_before = np.searchsorted(t_sorted, tau, side="left")
    n_total = time.size - n_before
    arm1_cum = np.concatenate(([0.0], np.cumsum(a_sorted)))
    n_arm1 = arm1_cum[-1] - arm1_cum[n_before]

    km = np.cumprod(1.0 - d_total / n_total)
    km_left = np.concatenate(([1.0], km[:-1]))

    return RiskArrays(
        tau=tau,
        n_total=n_total.astype(np.int64),
        n_arm1=n_arm1.astype(np.int64),
        d_total=d_total.astype(np.int64),
        d_arm1=d_arm1.astype(np.int64),
        km_left=km_left,
    )


def build_risk_table(records: Sequence[SurvivalRecord]) -> list[RiskTableRow]:
    """Reduce subject-level records to the per-event-time risk table.

    Requires at least one event and subjects on both arms. The result is
    sorted strictly increasing in ``tau`` and is invariant to the input
    record order.
    """
    arrays = risk_arrays(
        np.array([r.time for r in records], dtype=np.float64),
        np.array([r.event for r in records], dtype=bool),
        np.array([r.arm for r in records], dtype=np.int8),
    )
    return [
        RiskTableRow(
            tau=float(arrays.tau[i]),
            n_total=int(arrays.n_total[i]),
            n_arm1=int(arrays.n_arm1[i]),
            d_total=int(arrays.d_total[i]),
            d_arm1=int(arrays.d_arm1[i]),
            km_left=float(arrays.km_left[i]),
        )
        for i in range(len(arrays))
    ]


def rows_to_arrays(table: Sequence[RiskTableRow]) -> RiskArrays:
    """Convert the row form back to columns (no validation beyond emptiness)."""
    if len(table) == 0:
        raise DataError("no data")
    return RiskArrays(
        tau=np.array([r.tau for r in table], dtype=np.float64),
        n_total=np.array([r.n_total for r in table], dtype=np.int64),
        n_arm1=np.array([r.n_arm1 for r in table], dtype=np.int64),
        d_total=np.array([r.d_total for r in table], dtype=np.int64),
        d_arm1=np.array([r.d_arm1 for r in table], dtype=np.int64),
        km_left=np.array([r.km_left for r in table], dtype=np.float64),
    )


def read_survival_csv(path: str) -> list[SurvivalRecord]:
    """Read subject records from a ``time,event,arm`` CSV file.

    Malformed rows are hard errors that report the 1-based line number.
    """
    records: list[SurvivalRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file, expected header {','.join(CSV_HEADER)}")
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise DataError(
                f"{path}:1: expected header {','.join(CSV_HEADER)}, got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            raw_time, raw_event, raw_arm = (f.strip() for f in row)
            try:
                time = float(raw_time)
            except ValueError:
                raise DataError(f"{path}:{lineno}: time is not a number: {raw_time!r}") from None
            if not (math.isfinite(time) and time >= 0):
                raise DataError(f"{path}:{lineno}: time must be finite and >= 0, got {raw_time}")
            if raw_event not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: event must be 0 or 1, got {raw_event!r}")
            if raw_arm not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: arm must be 0 or 1, got {raw_arm!r}")
            records.append(SurvivalRecord(time=time, event=raw_event == "1", arm=int(raw_arm)))
    return records


def write_survival_csv(path: str, records: Iterable[SurvivalRecord]) -> None:
    """Write records in the same ``time,event,arm`` schema the reader accepts."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([repr(float(r.time)), int(r.event), int(r.arm)])
