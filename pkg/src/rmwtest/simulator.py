"""Trial simulation: piecewise-exponential arms, uniform recruitment,
administrative censoring at a fixed study end.

Replicates are keyed by (master seed, replicate index) through a
counter-based generator, so a dataset depends only on those two numbers
and never on execution order or worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import SurvivalRecord

_KEY_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class PiecewiseHazard:
    """Piecewise-constant hazard: rates[i] applies on [knots[i-1], knots[i]).

    ``rates`` has one more entry than ``knots``; the final rate extends to
    infinity. A constant hazard is ``knots=()``.
    """

    knots: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self) -> None:
        knots = tuple(float(k) for k in self.knots)
        rates = tuple(float(r) for r in self.rates)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "rates", rates)
        if len(rates) != len(knots) + 1:
            raise ValueError(
                f"need len(knots)+1 rates, got {len(knots)} knots and {len(rates)} rates"
            )
        if any(not math.isfinite(k) or k < 0 for k in knots):
            raise ValueError(f"knots must be finite and >= 0, got {knots}")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ValueError(f"knots must be strictly increasing, got {knots}")
        if any(not math.isfinite(r) or r <= 0 for r in rates):
            raise ValueError(f"rates must be finite and > 0, got {rates}")

    def _grid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(segment starts, cumulative hazard at starts, rates) as arrays."""
        starts = np.concatenate(([0.0], np.asarray(self.knots, dtype=np.float64)))
        rates = np.asarray(self.rates, dtype=np.float64)
        widths = np.diff(starts)
        cum = np.concatenate(([0.0], np.cumsum(widths * rates[:-1])))
        return starts, cum, rates

    def cumulative_hazard(self, t):
        """Integrated hazard at time(s) t >= 0."""
        t_arr = np.asarray(t, dtype=np.float64)
        if np.any(t_arr < 0):
            raise ValueError("time must be >= 0")
        starts, cum, rates = self._grid()
        seg = np.searchsorted(starts, t_arr, side="right") - 1
        out = cum[seg] + (t_arr - starts[seg]) * rates[seg]
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    def survival(self, t):
        """Survivor function exp(-cumulative_hazard(t))."""
        return np.exp(-self.cumulative_hazard(t))

    def inverse_cumulative_hazard(self, y):
        """Time at which the integrated hazard reaches y >= 0."""
        y_arr = np.asarray(y, dtype=np.float64)
        if np.any(y_arr < 0):
            raise ValueError("cumulative hazard must be >= 0")
        starts, cum, rates = self._grid()
        seg = np.searchsorted(cum, y_arr, side="right") - 1
        out = starts[seg] + (y_arr - cum[seg]) / rates[seg]
        return float(out) if np.isscalar(y) or y_arr.ndim == 0 else out


@dataclass(frozen=True)
class Scenario:
    """One simulated-trial configuration: two arms, fixed study length.

    ``n_total`` subjects split exactly 1:1; arm 0 is control, arm 1
    experimental. Entry is uniform on [0, recruit_duration]; the only
    censoring is administrative at ``study_length`` calendar months.
    """

    name: str
    n_total: int
    study_length: float
    recruit_duration: float
    arm0: PiecewiseHazard
    arm1: PiecewiseHazard

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("scenario name must be nonempty")
        if not (isinstance(self.n_total, int) and self.n_total >= 2 and self.n_total % 2 == 0):
            raise ValueError(f"n_total must be an even integer >= 2, got {self.n_total}")
        if not (
            math.isfinite(self.study_length)
            and math.isfinite(self.recruit_duration)
            and 0.0 < self.recruit_duration <= self.study_length
        ):
            raise ValueError(
                "require 0 < recruit_duration <= study_length, got "
                f"recruit_duration={self.recruit_duration}, study_length={self.study_length}"
            )


def sample_event_time(h: PiecewiseHazard, u: float) -> float:
    """Event time with survivor function exp(-cumulative hazard), from one uniform draw.

    Inverts the cumulative hazard at -log(u) for u in (0, 1).
    """
    if not 0.0 < u < 1.0:
        raise ValueError(f"u must lie in (0, 1), got {u}")
    return float(h.inverse_cumulative_hazard(-math.log(u)))


def _stream_key(seed: int, replicate: int) -> int:
    """128-bit Philox key from (master seed, replicate index)."""
    return ((replicate & _KEY_MASK) << 64) | (seed & _KEY_MASK)


def _trial_arrays(
    scenario: Scenario, seed: int, replicate: int = 0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(time, event, arm) arrays for one simulated trial.

    Draw order is fixed: entry uniforms for all subjects, then event
    uniforms for all subjects, with the control arm in the first half.
    """
    n = scenario.n_total
    half = n // 2
    rng = np.random.Generator(np.random.Philox(key=_stream_key(seed, replicate)))
    entry = rng.random(n) * scenario.recruit_duration
    # map draws onto (0, 1] so the inverted hazard is finite
    u = 1.0 - rng.random(n)
    cum = -np.log(u)
    event_time = np.empty(n)
    event_time[:half] = scenario.arm0.inverse_cumulative_hazard(cum[:half])
    event_time[half:] = scenario.arm1.inverse_cumulative_hazard(cum[half:])
    cap = scenario.study_length - entry
    event = event_time <= cap
    time = np.where(event, event_time, cap)
    arm = np.zeros(n, dtype=np.int64)
    arm[half:] = 1
    return time, event.astype(np.int64), arm


def simulate_trial(scenario: Scenario, seed: int, replicate: int = 0) -> list[SurvivalRecord]:
    """Simulate one trial dataset, deterministic in (seed, replicate)."""
    time, event, arm = _trial_arrays(scenario, seed, replicate)
    return [
        SurvivalRecord(time=float(t), event=int(e), arm=int(a))
        for t, e, a in zip(time, event, arm)
    ]


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "name": s.name,
        "n_total": s.n_total,
        "study_length": s.study_length,
        "recruit_duration": s.recruit_duration,
        "arm0": {"knots": list(s.arm0.knots), "rates": list(s.arm0.rates)},
        "arm1": {"knots": list(s.arm1.knots), "rates": list(s.arm1.rates)},
    }


def scenario_from_dict(d: dict) -> Scenario:
    try:
        return Scenario(
            name=d["name"],
            n_total=int(d["n_total"]),
            study_length=float(d["study_length"]),
            recruit_duration=float(d["recruit_duration"]),
            arm0=PiecewiseHazard(tuple(d["arm0"]["knots"]), tuple(d["arm0"]["rates"])),
            arm1=PiecewiseHazard(tuple(d["arm1"]["knots"]), tuple(d["arm1"]["rates"])),
        )
    except KeyError as exc:
        raise ValueError(f"scenario is missing field {exc.args[0]!r}") from None


def write_scenario(path, s: Scenario) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(s), fh, indent=2)
        fh.write("\n")


def read_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def scenario_hash(s: Scenario) -> str:
    """Stable sha256 fingerprint of the scenario parameters, for provenance."""
    canon = json.dumps(scenario_to_dict(s), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _make(name, n, length, arm1_knots, arm1_rates, arm0_knots, arm0_rates) -> Scenario:
    return Scenario(
        name=name,
        n_total=n,
        study_length=length,
        recruit_duration=12.0,
        arm0=PiecewiseHazard(arm0_knots, arm0_rates),
        arm1=PiecewiseHazard(arm1_knots, arm1_rates),
    )


# Ten built-in scenarios: {high, low} event rate x {delayed, ph, diminishing,
# equal, early_harm}. High: 24-month study, N=1000; low: 36-month study,
# N=6000. Hazards are per subject-month; all use 12-month uniform recruitment.
BUILTIN_SCENARIOS: dict[str, Scenario] = {
    s.name: s
    for s in (
        _make("high_delayed", 1000, 24.0, (6.0,), (0.0462, 0.0289), (), (0.0462,)),
        _make("high_ph", 1000, 24.0, (), (0.0365,), (), (0.0462,)),
        _make(
            "high_diminishing", 1000, 24.0,
            (9.0, 18.0), (0.0315, 0.0408, 0.0693), (), (0.0462,),
        ),
        _make("high_equal", 1000, 24.0, (), (0.0462,), (), (0.0462,)),
        _make(
            "high_early_harm", 1000, 24.0,
            (2.0,), (0.0990, 0.0462), (2.0, 6.0), (0.0495, 0.0693, 0.0462),
        ),
        _make("low_delayed", 6000, 36.0, (6.0,), (0.00462, 0.00352), (), (0.00462,)),
        _make("low_ph", 6000, 36.0, (), (0.00375,), (), (0.00462,)),
        _make(
            "low_diminishing", 6000, 36.0,
            (9.0, 18.0), (0.00210, 0.00289, 0.00578), (), (0.00462,),
        ),
        _make("low_equal", 6000, 36.0, (), (0.00462,), (), (0.00462,)),
        _make(
            "low_early_harm", 6000, 36.0,
            (4.0,), (0.01160, 0.00462), (4.0, 13.0), (0.00385, 0.00770, 0.00462),
        ),
    )
}


def get_scenario(name: str) -> Scenario:
    """Look up a built-in scenario by name."""
    try:
        return BUILTIN_SCENARIOS[name]
    except KeyError:
        valid = ", ".join(sorted(BUILTIN_SCENARIOS))
        raise ValueError(f"unknown scenario {name!r}; valid names: {valid}") from None
