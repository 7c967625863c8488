"""Synthetic fixtures shaped like the two supported empirical data layouts.

The real empirical data sets are external downloads; these generators mimic
their shapes (phase counts, magnitudes, metadata columns) so the full CLI
pipeline is exercisable offline.  They carry no claim of matching the real
sets' numbers.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .grouped import GroupedData, GroupRecord
from .simulation import ScenarioSpec, generate
from .types import DetectionHistory, PhasePlan

__all__ = [
    "commercial_like_history",
    "mission_like_grouped",
    "write_commercial_like",
    "write_mission_like",
]

_SEVERITIES = ("simple", "medium", "complex")


def commercial_like_history(seed: int = 0) -> tuple[DetectionHistory, dict]:
    """Four testing cycles, ~8.8k inputs total, with a severity column.

    Returns the history plus per-bug severity metadata (pass-through only).
    """
    spec = ScenarioSpec(
        scenario_id="commercial-like",
        N=348,
        r=8.76e-6,
        T=(2200, 2200, 2200, 2157),
        Q=4,
        replicates=1,
        a_s=1.5,
        b_s=0.1,
        seed=seed,
    )
    history, _ = generate(spec, np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 1)
    severities = {
        rec.bug_id: {"severity": _SEVERITIES[rng.integers(0, 3)]}
        for rec in history.records
    }
    return history, severities


def mission_like_grouped(
    seed: int = 0, bound: int = 200, detected_offset: int = 33
) -> GroupedData:
    """Eight testing phases of group-level detections plus a deterministic
    manually-inspected detection count, mimicking mission-software logs."""
    rng = np.random.default_rng(seed)
    plan = PhasePlan(inputs_per_phase=(900, 700, 650, 620, 600, 580, 550, 500))
    rate = 1.1e-3
    n_groups_true = 84
    sizes = rng.poisson(rng.gamma(2.0, 1.5, size=n_groups_true)) + 1

    records = []
    gid = 0
    in_pool = np.ones(n_groups_true, dtype=bool)
    for phase, t_j in enumerate(plan.inputs_per_phase, start=1):
        prob = -np.expm1(sizes * np.log1p(-rate))
        counts = rng.binomial(t_j, np.where(in_pool, prob, 0.0))
        for g in np.flatnonzero(counts > 0):
            gid += 1
            group_size = int(1 + rng.poisson(0.6))
            records.append(
                GroupRecord(
                    group_id=f"grp{gid:03d}",
                    phase=phase,
                    detected_count=int(min(counts[g], group_size)),
                    group_size=group_size,
                )
            )
            in_pool[g] = False
    return GroupedData(
        records=tuple(records),
        bound=bound,
        plan=plan,
        detected_offset=detected_offset,
    )


def write_commercial_like(outdir, seed: int = 0) -> tuple[Path, Path]:
    """Write detections.csv (with a severity column) and phases.csv."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    history, severities = commercial_like_history(seed)
    detections = outdir / "detections.csv"
    with detections.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bug_id", "phase", "detections", "severity"])
        for rec in history.records:
            writer.writerow(
                [rec.bug_id, rec.phase, rec.count, severities[rec.bug_id]["severity"]]
            )
    phases = outdir / "phases.csv"
    with phases.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase", "inputs"])
        for j, t in enumerate(history.plan.inputs_per_phase, start=1):
            writer.writerow([j, t])
    return detections, phases


def write_mission_like(outdir, seed: int = 0) -> Path:
    """Write grouped.csv in the group-level log format."""
    from .io import write_grouped_csv

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    data = mission_like_grouped(seed)
    path = outdir / "grouped.csv"
    write_grouped_csv(data, path)
    return path
