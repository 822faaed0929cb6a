"""Monte Carlo operating characteristics: power / type-I error for a set
of max-combo methods across scenarios, plus prior-weighted assurance.

Every method is evaluated on the same simulated dataset within a
replicate (common random numbers), so methods are comparable
decision-by-decision, not just rate-by-rate. Replicates are keyed
individually by (seed, replicate index); totals are sums of per-block
integer counts, so the result is identical for any worker count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .combo import ComboSpec, combo_reject
from .dataset import risk_arrays
from .errors import DataError, NumericalError
from .simulator import Scenario, _trial_arrays
from .weights import WeightSpec, weights_from_km_left
from .wlrt import _acc_sum, moment_arrays, statistic_from_arrays

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MethodSpec:
    """A labeled test; single tests are combos with k2 = 0."""

    label: str
    combo: ComboSpec

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("method label must be nonempty")


def paper_methods() -> tuple[MethodSpec, ...]:
    """The six benchmark methods.

    LR; MW with s*=0.5; the robust combinations of those two at equal and
    (0.6, 0.4) alpha splits; FH(0, 0.5); and the max-combo of LR with
    FH(0, 0.5) at an equal split. All one-sided at alpha = 0.025.
    """
    lr = WeightSpec.constant()
    mw = WeightSpec.modest(0.5)
    fh = WeightSpec.fleming_harrington(0.0, 0.5)

    def single(label: str, w: WeightSpec) -> MethodSpec:
        return MethodSpec(label, ComboSpec(w, w, k1=1.0, k2=0.0))

    return (
        single("LR", lr),
        single("MW", mw),
        MethodSpec("rMW(k1=0.5)", ComboSpec(lr, mw, k1=0.5, k2=0.5)),
        MethodSpec("rMW(k1=0.6)", ComboSpec(lr, mw, k1=0.6, k2=0.4)),
        single("FH", fh),
        MethodSpec("MaxCombo", ComboSpec(lr, fh, k1=0.5, k2=0.5)),
    )


@dataclass(frozen=True)
class OperatingCharacteristics:
    """Per-method rejection rates for one scenario's Monte Carlo run."""

    scenario: str
    replicates: int
    seed: int
    rates: Mapping[str, float] = field(default_factory=dict)
    degenerate: int = 0

    def standard_error(self, label: str) -> float:
        p = self.rates[label]
        return math.sqrt(p * (1.0 - p) / self.replicates)


@dataclass(frozen=True)
class AssuranceSpec:
    """Discrete prior over scenario names; weights sum to 1."""

    prior: Mapping[str, float]

    def __post_init__(self) -> None:
        prior = dict(self.prior)
        object.__setattr__(self, "prior", prior)
        if not prior:
            raise ValueError("prior must be nonempty")
        for name, w in prior.items():
            if not (isinstance(w, (int, float)) and math.isfinite(w) and w >= 0.0):
                raise ValueError(f"prior weight for {name!r} must be finite and >= 0, got {w!r}")
        total = math.fsum(prior.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"prior weights must sum to 1, got {total!r}")


class _RunPlan:
    """Precompiled evaluation plan shared by all replicates of a run.

    Deduplicates weight specs across methods so each distinct component
    statistic and each distinct component pair's correlation is computed
    once per dataset.
    """

    def __init__(self, methods: Sequence[MethodSpec]):
        labels = [m.label for m in methods]
        if len(set(labels)) != len(labels):
            raise ValueError("method labels must be unique within a run")
        self.methods = tuple(methods)
        self.specs: list[WeightSpec] = []
        index: dict[WeightSpec, int] = {}

        def intern(spec: WeightSpec) -> int:
            if spec not in index:
                index[spec] = len(self.specs)
                self.specs.append(spec)
            return index[spec]

        self.components: list[tuple[int, int]] = []
        pair_set: dict[tuple[int, int], None] = {}
        for m in methods:
            i = intern(m.combo.w1)
            j = intern(m.combo.w2) if m.combo.k2 > 0.0 else i
            self.components.append((i, j))
            if m.combo.k2 > 0.0 and i != j:
                pair_set[(i, j)] = None
        self.pairs = tuple(pair_set)


def _replicate_row(plan: _RunPlan, time, event, arm) -> np.ndarray:
    """Rejection decisions of every method on one dataset."""
    risk = risk_arrays(time, event, arm)
    mean, var = moment_arrays(risk)
    w = [weights_from_km_left(spec, risk.km_left) for spec in plan.specs]
    stats = [statistic_from_arrays(wi, risk, mean, var) for wi in w]
    rho = {}
    for i, j in plan.pairs:
        r = _acc_sum(w[i] * w[j] * var) / math.sqrt(stats[i][1] * stats[j][1])
        rho[(i, j)] = min(max(r, 0.0), 1.0)
    row = np.empty(len(plan.methods), dtype=bool)
    for m, method in enumerate(plan.methods):
        i, j = plan.components[m]
        # identical components are perfectly correlated; single tests (i == j
        # with k2 = 0) never read the correlation
        r = rho[(i, j)] if i != j else 1.0
        row[m] = combo_reject(method.combo, stats[i][2], stats[j][2], r)
    return row


def _decision_block(
    scenario: Scenario,
    methods: Sequence[MethodSpec],
    seed: int,
    start: int,
    stop: int,
) -> tuple[np.ndarray, list[tuple[int, str]]]:
    """Decision matrix for replicates [start, stop) plus degenerate log entries.

    A replicate whose dataset cannot support the tests (no events, one arm
    absent, zero variance) contributes a row of non-rejections.
    """
    plan = _RunPlan(methods)
    rows = np.zeros((stop - start, len(methods)), dtype=bool)
    degenerate: list[tuple[int, str]] = []
    for rep in range(start, stop):
        time, event, arm = _trial_arrays(scenario, seed, rep)
        try:
            rows[rep - start] = _replicate_row(plan, time, event, arm)
        except (DataError, NumericalError) as exc:
            degenerate.append((rep, str(exc)))
    return rows, degenerate


def _count_block(args) -> tuple[np.ndarray, list[tuple[int, str]]]:
    scenario, methods, seed, start, stop = args
    rows, degenerate = _decision_block(scenario, methods, seed, start, stop)
    return rows.sum(axis=0, dtype=np.int64), degenerate


def estimate_power(
    scenario: Scenario,
    methods: Sequence[MethodSpec],
    replicates: int,
    seed: int,
    *,
    workers: int = 1,
) -> OperatingCharacteristics:
    """Monte Carlo rejection rate of each method under one scenario.

    All methods see the same `replicates` simulated datasets. The result
    depends only on (scenario, methods, replicates, seed), never on
    `workers`.
    """
    if replicates < 100:
        raise ValueError(f"replicates must be >= 100, got {replicates}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    methods = tuple(methods)
    _RunPlan(methods)  # validate labels before any work
    if workers == 1:
        counts, degenerate = _count_block((scenario, methods, seed, 0, replicates))
    else:
        n_blocks = min(4 * workers, max(1, replicates // 100))
        edges = np.linspace(0, replicates, n_blocks + 1).astype(int)
        tasks = [
            (scenario, methods, seed, int(a), int(b))
            for a, b in zip(edges[:-1], edges[1:])
            if b > a
        ]
        counts = np.zeros(len(methods), dtype=np.int64)
        degenerate = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for block_counts, block_degenerate in pool.map(_count_block, tasks):
                counts += block_counts
                degenerate.extend(block_degenerate)
        degenerate.sort()
    for rep, msg in degenerate:
        logger.warning(
            "replicate %d of scenario %s degenerate (%s); counted as non-rejection",
            rep, scenario.name, msg,
        )
    rates = {m.label: int(c) / replicates for m, c in zip(methods, counts)}
    return OperatingCharacteristics(
        scenario=scenario.name,
        replicates=replicates,
        seed=seed,
        rates=rates,
        degenerate=len(degenerate),
    )


def assurance(
    oc_by_scenario: Mapping[str, OperatingCharacteristics],
    prior: AssuranceSpec,
    label: str,
) -> float:
    """Prior-weighted average of one method's rejection rates across scenarios."""
    terms = []
    for name, weight in prior.prior.items():
        if name not in oc_by_scenario:
            raise ValueError(f"missing scenario {name!r} in operating characteristics")
        oc = oc_by_scenario[name]
        if label not in oc.rates:
            raise ValueError(f"method {label!r} missing from scenario {name!r}")
        terms.append(weight * oc.rates[label])
    return math.fsum(terms)


_POWER_HEADER = (
    "scenario", "method", "rejection_rate", "mc_standard_error", "replicates", "seed",
)


def write_power_csv(path, ocs: Sequence[OperatingCharacteristics]) -> None:
    """One row per scenario x method; floats in shortest round-trip form."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_POWER_HEADER)
        for oc in ocs:
            for label, rate in oc.rates.items():
                writer.writerow(
                    (
                        oc.scenario,
                        label,
                        repr(rate),
                        repr(oc.standard_error(label)),
                        oc.replicates,
                        oc.seed,
                    )
                )


def read_power_csv(path) -> dict[str, OperatingCharacteristics]:
    """Read rejection rates back, keyed by scenario name."""
    import csv

    grouped: dict[str, dict] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != _POWER_HEADER:
            raise DataError(
                f"{path}:1: expected header {','.join(_POWER_HEADER)}, got {header!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_POWER_HEADER):
                raise DataError(f"{path}:{lineno}: expected {len(_POWER_HEADER)} fields")
            scenario, label, rate_s, _se, reps_s, seed_s = (f.strip() for f in row)
            try:
                rate, reps, seed = float(rate_s), int(reps_s), int(seed_s)
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed numeric field") from None
            if not 0.0 <= rate <= 1.0:
                raise DataError(f"{path}:{lineno}: rejection_rate outside [0, 1]: {rate}")
            entry = grouped.setdefault(
                scenario, {"rates": {}, "replicates": reps, "seed": seed}
            )
            if label in entry["rates"]:
                raise DataError(f"{path}:{lineno}: duplicate method {label!r} for {scenario!r}")
            entry["rates"][label] = rate
    return {
        name: OperatingCharacteristics(
            scenario=name,
            replicates=entry["replicates"],
            seed=entry["seed"],
            rates=entry["rates"],
        )
        for name, entry in grouped.items()
    }


def method_to_dict(m: MethodSpec) -> dict:
    return {
        "label": m.label,
        "w1": m.combo.w1.label(),
        "w2": m.combo.w2.label(),
        "k1": m.combo.k1,
        "k2": m.combo.k2,
        "alpha": m.combo.alpha,
    }


def write_power_json(
    path,
    ocs: Sequence[OperatingCharacteristics],
    methods: Sequence[MethodSpec],
    scenario_hashes: Mapping[str, str] | None = None,
) -> None:
    """Nested variant of the power table with method definitions inline."""
    import json

    payload = {
        "methods": [method_to_dict(m) for m in methods],
        "scenarios": [
            {
                "name": oc.scenario,
                "hash": (scenario_hashes or {}).get(oc.scenario),
                "replicates": oc.replicates,
                "seed": oc.seed,
                "degenerate": oc.degenerate,
                "results": {
                    label: {
                        "rejection_rate": rate,
                        "mc_standard_error": oc.standard_error(label),
                    }
                    for label, rate in oc.rates.items()
                },
            }
            for oc in ocs
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
