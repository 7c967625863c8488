"""File formats: detection logs, phase tables, configs, fit artifacts.

All CSVs are UTF-8 with a mandatory header row.  Ingestion is strict and
names the offending rows; nothing is silently repaired.  Fit output
directories are self-contained: the chain CSVs carry the monitored scalars,
``draws.npz`` carries the retained latent state, and ``manifest.json``
carries configuration, seeds, diagnostics and versions, which together are
enough to rerun prediction bit-identically.
"""

from __future__ import annotations

import csv
import json
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
import sklearn

from . import __version__
from .engine import ChainSet, PosteriorSummary, RunConfig, effective_sample_size
from .errors import ValidationError
from .grouped import GroupedData, GroupRecord
from .prediction import PredictionResult
from .samplers import SamplerConfig
from .simulation import GroundTruth, StudyReport
from .types import BugRecord, DetectionHistory, PhasePlan, Priors

__all__ = [
    "AnalysisConfig",
    "IngestionSummary",
    "read_phases_csv",
    "read_detections_csv",
    "read_grouped_csv",
    "write_phases_csv",
    "write_detections_csv",
    "write_truth_csv",
    "write_fit_outputs",
    "read_fit_dir",
    "write_prediction_outputs",
    "write_study_outputs",
]

MANIFEST_NAME = "manifest.json"
DRAWS_NAME = "draws.npz"
SUMMARY_NAME = "summary.csv"


def _fmt(value) -> str:
    """Shortest round-trip text for numbers; deterministic across runs."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _read_rows(path: Path, required: tuple[str, ...]) -> tuple[list[dict], list[str]]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValidationError(f"{path}: empty file, header row is mandatory")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise ValidationError(f"{path}: missing required columns {missing}")
        rows = list(reader)
    return rows, list(reader.fieldnames)


def _parse_int(raw: str, path: Path, row: int, column: str) -> int:
    try:
        return int(raw)
    except (TypeError, ValueError):
        raise ValidationError(
            f"{path} row {row}: column {column!r} is not an integer: {raw!r}"
        ) from None


# ---------------------------------------------------------------------------
# phase plans and detection logs
# ---------------------------------------------------------------------------

def read_phases_csv(path) -> PhasePlan:
    """Read a phase table (columns: phase, inputs; phases 1..Q complete)."""
    path = Path(path)
    rows, _ = _read_rows(path, ("phase", "inputs"))
    if not rows:
        raise ValidationError(f"{path}: no phases defined")
    inputs: dict[int, int] = {}
    for k, row in enumerate(rows, start=2):
        phase = _parse_int(row["phase"], path, k, "phase")
        t = _parse_int(row["inputs"], path, k, "inputs")
        if phase in inputs:
            raise ValidationError(f"{path} row {k}: duplicate phase {phase}")
        if t < 1:
            raise ValidationError(f"{path} row {k}: inputs must be >= 1")
        inputs[phase] = t
    q = max(inputs)
    if sorted(inputs) != list(range(1, q + 1)):
        raise ValidationError(f"{path}: phases must cover 1..{q} without gaps")
    return PhasePlan(inputs_per_phase=tuple(inputs[j] for j in range(1, q + 1)))


def write_phases_csv(plan: PhasePlan, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase", "inputs"])
        for j, t in enumerate(plan.inputs_per_phase, start=1):
            writer.writerow([j, t])


@dataclass(frozen=True)
class IngestionSummary:
    """What ingestion saw, including pass-through metadata it does not use."""

    n_rows: int
    n_bugs: int
    multi_detection_count: int
    extra_columns: tuple[str, ...]
    extras: dict = field(default_factory=dict)

    @property
    def multi_detection_fraction(self) -> float:
        return self.multi_detection_count / self.n_bugs if self.n_bugs else 0.0


def read_detections_csv(path, plan: PhasePlan) -> tuple[DetectionHistory, IngestionSummary]:
    """Read a per-bug detection log (columns: bug_id, phase, detections).

    Exactly one row with positive detections per bug; zero-count rows are
    accepted only for phases before the bug's detection phase (detected bugs
    leave the pool, and never-detected bugs are not data rows: the model
    accounts for them through augmentation).  Extra columns (e.g. severity)
    are preserved as pass-through metadata and never interpreted.
    """
    path = Path(path)
    rows, columns = _read_rows(path, ("bug_id", "phase", "detections"))
    extra_columns = tuple(c for c in columns if c not in ("bug_id", "phase", "detections"))

    per_bug: dict[str, list] = {}
    extras: dict[str, dict] = {}
    for k, row in enumerate(rows, start=2):
        bug = (row["bug_id"] or "").strip()
        if not bug:
            raise ValidationError(f"{path} row {k}: empty bug_id")
        phase = _parse_int(row["phase"], path, k, "phase")
        count = _parse_int(row["detections"], path, k, "detections")
        if count < 0:
            raise ValidationError(f"{path} row {k}: negative detections")
        if not 1 <= phase <= plan.n_phases:
            raise ValidationError(
                f"{path} row {k}: phase {phase} outside 1..{plan.n_phases}"
            )
        per_bug.setdefault(bug, []).append((k, phase, count))
        if extra_columns:
            extras.setdefault(bug, {}).update(
                {c: row[c] for c in extra_columns if row.get(c) not in (None, "")}
            )

    records = []
    multi = 0
    for bug, entries in per_bug.items():
        phases_seen = [p for _, p, _ in entries]
        if len(set(phases_seen)) != len(phases_seen):
            dup_rows = [r for r, _, _ in entries]
            raise ValidationError(
                f"{path}: bug {bug!r} has duplicate phase rows (rows {dup_rows})"
            )
        positives = [(r, p, c) for r, p, c in entries if c > 0]
        if len(positives) > 1:
            dup = [r for r, _, _ in positives]
            raise ValidationError(
                f"{path}: bug {bug!r} has detections in more than one phase "
                f"(rows {dup}); a bug is removed once detected"
            )
        if not positives:
            only_rows = [r for r, _, _ in entries]
            raise ValidationError(
                f"{path}: bug {bug!r} has only zero-detection rows "
                f"(rows {only_rows}); undetected bugs are not data rows"
            )
        row_no, phase, count = positives[0]
        late = [r for r, p, _ in entries if p > phase]
        if late:
            raise ValidationError(
                f"{path}: bug {bug!r} has rows after its detection phase "
                f"{phase} (rows {late}); it left the pool when detected"
            )
        if count > 1:
            multi += 1
        records.append(BugRecord(bug_id=bug, phase=phase, count=count))

    history = DetectionHistory(records=tuple(records), plan=plan)
    summary = IngestionSummary(
        n_rows=len(rows),
        n_bugs=len(records),
        multi_detection_count=multi,
        extra_columns=extra_columns,
        extras=extras,
    )
    return history, summary


def write_detections_csv(history: DetectionHistory, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bug_id", "phase", "detections"])
        for rec in history.records:
            writer.writerow([rec.bug_id, rec.phase, rec.count])


def write_truth_csv(truth: GroundTruth, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["bug_id", "size", "size_mean", "detected", "detection_phase", "detections"]
        )
        width = len(str(truth.n_bugs))
        for i in range(truth.n_bugs):
            writer.writerow([
                f"bug{i + 1:0{width}d}",
                int(truth.sizes[i]),
                _fmt(truth.size_means[i]),
                int(truth.detected[i]),
                int(truth.detection_phase[i]),
                int(truth.detection_count[i]),
            ])


# ---------------------------------------------------------------------------
# grouped detection logs
# ---------------------------------------------------------------------------

def read_grouped_csv(
    path,
    bound: int,
    plan: PhasePlan | None = None,
    detected_offset: int = 0,
    undetected_mean: float | None = None,
) -> GroupedData:
    """Read a group-level detection log.

    Columns: group_id, phase, inputs, detected_count, group_size.  The phase
    table is reconstructed from the ``inputs`` column unless an explicit plan
    is provided (needed when some phase had no detected groups).
    """
    path = Path(path)
    rows, _ = _read_rows(
        path, ("group_id", "phase", "inputs", "detected_count", "group_size")
    )
    seen_inputs: dict[int, int] = {}
    parsed = []
    for k, row in enumerate(rows, start=2):
        gid = (row["group_id"] or "").strip()
        if not gid:
            raise ValidationError(f"{path} row {k}: empty group_id")
        phase = _parse_int(row["phase"], path, k, "phase")
        t = _parse_int(row["inputs"], path, k, "inputs")
        detected = _parse_int(row["detected_count"], path, k, "detected_count")
        size = _parse_int(row["group_size"], path, k, "group_size")
        if phase < 1:
            raise ValidationError(f"{path} row {k}: phase must be >= 1")
        if t < 1:
            raise ValidationError(f"{path} row {k}: inputs must be >= 1")
        if detected < 1:
            raise ValidationError(
                f"{path} row {k}: observed groups need detected_count >= 1"
            )
        if size < detected:
            raise ValidationError(
                f"{path} row {k}: group_size {size} below detected_count {detected}"
            )
        if seen_inputs.setdefault(phase, t) != t:
            raise ValidationError(
                f"{path} row {k}: phase {phase} listed with conflicting inputs "
                f"({seen_inputs[phase]} vs {t})"
            )
        parsed.append((k, gid, phase, detected, size))

    if plan is None:
        if not parsed:
            raise ValidationError(f"{path}: no groups and no explicit phase table")
        q = max(p for _, _, p, _, _ in parsed)
        missing = [j for j in range(1, q + 1) if j not in seen_inputs]
        if missing:
            raise ValidationError(
                f"{path}: phases {missing} never appear; pass an explicit "
                "phase table for phases without detected groups"
            )
        plan = PhasePlan(inputs_per_phase=tuple(seen_inputs[j] for j in range(1, q + 1)))
    else:
        for k, _, phase, _, _ in parsed:
            if phase > plan.n_phases:
                raise ValidationError(
                    f"{path} row {k}: phase {phase} outside the phase table"
                )
            if seen_inputs[phase] != plan.inputs_per_phase[phase - 1]:
                raise ValidationError(
                    f"{path} row {k}: inputs disagree with the phase table "
                    f"for phase {phase}"
                )

    records = tuple(
        GroupRecord(group_id=gid, phase=phase, detected_count=det, group_size=size)
        for _, gid, phase, det, size in parsed
    )
    return GroupedData(
        records=records,
        bound=bound,
        plan=plan,
        detected_offset=detected_offset,
        undetected_mean=undetected_mean,
    )


def write_grouped_csv(data: GroupedData, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group_id", "phase", "inputs", "detected_count", "group_size"])
        for rec in data.records:
            writer.writerow([
                rec.group_id,
                rec.phase,
                data.plan.inputs_per_phase[rec.phase - 1],
                rec.detected_count,
                rec.group_size,
            ])


# ---------------------------------------------------------------------------
# analysis configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalysisConfig:
    """Fit configuration as read from a JSON config file."""

    bound: int
    variant: str = "ungrouped"
    priors: Priors = field(default_factory=Priors)
    run: RunConfig = field(default_factory=RunConfig)
    detected_offset: int = 0
    undetected_mean: float | None = None
    prediction: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "AnalysisConfig":
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        with path.open(encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "AnalysisConfig":
        if not isinstance(raw, dict):
            raise ValidationError("config must be a JSON object")
        known = {"bound", "variant", "priors", "run", "sampler", "grouped", "prediction"}
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"config: unknown keys {sorted(unknown)}")
        if "bound" not in raw:
            raise ValidationError("config: 'bound' (augmentation limit) is required")
        variant = raw.get("variant", "ungrouped")
        if variant not in ("ungrouped", "grouped"):
            raise ValidationError(f"config: unknown variant {variant!r}")

        priors_raw = raw.get("priors", {})
        priors = Priors(
            size_shape=float(priors_raw.get("size_shape", 1.0)),
            size_rate=float(priors_raw.get("size_rate", 0.1)),
        )
        run_raw = raw.get("run", {})
        sampler_raw = raw.get("sampler", {})
        sampler = SamplerConfig(
            rw_step_rate=float(sampler_raw.get("rw_step_rate", 1.0)),
            rw_step_inclusion=float(sampler_raw.get("rw_step_inclusion", 1.0)),
            adapt_target=float(sampler_raw.get("adapt_target", 0.44)),
            adapt_interval=int(sampler_raw.get("adapt_interval", 50)),
            slice_width=int(sampler_raw.get("slice_width", 8)),
            rng_seed=int(run_raw.get("seed", 0)),
            inclusion_kernel=str(sampler_raw.get("inclusion_kernel", "rw_mh")),
        )
        run_cfg = RunConfig(
            n_chains=int(run_raw.get("n_chains", 3)),
            n_iterations=int(run_raw.get("n_iterations", 10_000)),
            burn_in=int(run_raw.get("burn_in", 5_000)),
            thin=int(run_raw.get("thin", 1)),
            priors=priors,
            sampler=sampler,
            keep_draws=True,
        )
        grouped_raw = raw.get("grouped", {})
        mu = grouped_raw.get("undetected_mean")
        return cls(
            bound=int(raw["bound"]),
            variant=variant,
            priors=priors,
            run=run_cfg,
            detected_offset=int(grouped_raw.get("detected_offset", 0)),
            undetected_mean=float(mu) if mu is not None else None,
            prediction=dict(raw.get("prediction", {})),
            raw=raw,
        )


# ---------------------------------------------------------------------------
# fit artifacts
# ---------------------------------------------------------------------------

def _versions() -> dict:
    return {
        "sizebiased": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
    }


def write_fit_outputs(
    outdir,
    chains: ChainSet,
    summary: PosteriorSummary,
    config_payload: dict,
    plan: PhasePlan,
    observed_phase: np.ndarray,
    warnings: list,
    grouped_payload: dict | None = None,
) -> Path:
    """Write chain CSVs, retained draws, summary table and the manifest."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    quantities = list(chains.quantities())
    for c in range(chains.n_chains):
        with (outdir / f"chain_{c + 1}.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration"] + quantities)
            for k in range(chains.n_kept):
                writer.writerow(
                    [int(chains.iterations[k])]
                    + [_fmt(chains.monitored[q][c, k]) for q in quantities]
                )

    n_chains, n_kept = chains.n_chains, chains.n_kept
    arrays = {
        "sizes": chains.sizes.reshape(n_chains * n_kept, -1),
        "included": chains.included.reshape(n_chains * n_kept, -1),
        "rates": chains.monitored["detect_rate"].reshape(-1),
        "observed_phase": observed_phase,
        "inputs_per_phase": np.asarray(plan.inputs_per_phase, dtype=np.int64),
        "n_detected": np.asarray([chains.n_detected]),
    }
    if chains.undetected_counts is not None:
        arrays["undetected_counts"] = chains.undetected_counts.reshape(
            n_chains * n_kept, -1
        )
    np.savez_compressed(outdir / DRAWS_NAME, **arrays)

    with (outdir / SUMMARY_NAME).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["quantity", "mean", "sd", "median", "q2_5", "q97_5", "rhat"])
        for name in quantities:
            row = summary[name]
            writer.writerow([
                name, _fmt(row.mean), _fmt(row.sd), _fmt(row.median),
                _fmt(row.q2_5), _fmt(row.q97_5),
                "" if row.rhat is None else _fmt(row.rhat),
            ])

    ess = {
        name: float(
            sum(effective_sample_size(chains.monitored[name][c]) for c in range(n_chains))
        )
        for name in quantities
    }
    manifest = {
        "config": _jsonify(config_payload),
        "seeds": _jsonify(chains.chain_seeds),
        "rhat": _jsonify({q: summary[q].rhat for q in quantities}),
        "acceptance": _jsonify(chains.acceptance),
        "versions": _versions(),
        "ess": _jsonify(ess),
        "warnings": list(warnings),
        "quantities": quantities,
        "n_detected": chains.n_detected,
        "bound": chains.model_bound,
    }
    if grouped_payload:
        manifest["grouped"] = _jsonify(grouped_payload)
    with (outdir / MANIFEST_NAME).open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return outdir


@dataclass(frozen=True)
class FitArtifacts:
    """Contents of a fit directory needed to run prediction."""

    sizes: np.ndarray
    included: np.ndarray
    rates: np.ndarray
    observed_phase: np.ndarray
    plan: PhasePlan
    n_detected: int
    manifest: dict


def read_fit_dir(fitdir) -> FitArtifacts:
    fitdir = Path(fitdir)
    draws_path = fitdir / DRAWS_NAME
    manifest_path = fitdir / MANIFEST_NAME
    if not draws_path.exists() or not manifest_path.exists():
        raise ValidationError(
            f"{fitdir} is not a fit directory ({DRAWS_NAME} / {MANIFEST_NAME} missing)"
        )
    with np.load(draws_path) as data:
        arrays = {k: data[k] for k in data.files}
    with manifest_path.open(encoding="utf-8") as fh:
        manifest = json.load(fh)
    return FitArtifacts(
        sizes=arrays["sizes"],
        included=arrays["included"],
        rates=arrays["rates"],
        observed_phase=arrays["observed_phase"],
        plan=PhasePlan(inputs_per_phase=tuple(int(t) for t in arrays["inputs_per_phase"])),
        n_detected=int(arrays["n_detected"][0]),
        manifest=manifest,
    )


# ---------------------------------------------------------------------------
# prediction artifacts
# ---------------------------------------------------------------------------

def write_prediction_outputs(outdir, result: PredictionResult, plan: PhasePlan) -> None:
    """Reliability curve CSV, stopping-phase distribution CSV and headline JSON."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    q = result.observed_phases

    with (outdir / "reliability.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase", "gamma", "threshold", "future_inputs"])
        for j in range(1, result.horizon + 1):
            inputs = (
                plan.inputs_per_phase[j - 1] if j <= q else int(result.future_inputs[j - q - 1])
            )
            writer.writerow([j, _fmt(result.reliability[j - 1]), _fmt(result.config.epsilon), inputs])

    dist = result.stop_phase_distribution()
    total = result.n_draws
    with (outdir / "stopping_distribution.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stop_phase", "count", "fraction"])
        for key in sorted(k for k in dist if k != "censored"):
            writer.writerow([key, dist[key], _fmt(dist[key] / total)])
        writer.writerow(["censored", dist["censored"], _fmt(dist["censored"] / total)])

    headline = {
        "epsilon": result.config.epsilon,
        "target": result.config.target,
        "horizon": result.horizon,
        "observed_phases": q,
        "crossing_phase": result.crossing_phase,
        "censored_fraction": result.censored_fraction(),
        "future_inputs": result.future_inputs.tolist(),
        "n_draws": total,
    }
    with (outdir / "prediction.json").open("w", encoding="utf-8") as fh:
        json.dump(_jsonify(headline), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# study artifacts
# ---------------------------------------------------------------------------

def write_study_outputs(outdir, report: StudyReport) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    with (outdir / "report.json").open("w", encoding="utf-8") as fh:
        json.dump(_jsonify(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    rows = payload["replicates"]
    if rows:
        with (outdir / "replicates.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = list(rows[0].keys())
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(row[h]) if row[h] is not None else "" for h in header])
