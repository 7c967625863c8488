"""Command-line interface.

Subcommands: ``simulate`` (scenario data generation), ``fit`` (per-bug
model), ``predict`` (reliability and stopping phase from a fit directory),
``fit-grouped`` (grouped model) and ``study`` (replication harness).

Exit codes: 0 success, 2 validation failure (bad data or configuration),
3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from .engine import run, summarize
from .errors import SizeBiasedError, ValidationError
from .grouped import GroupedModel, run_grouped
from .prediction import PredictionConfig, predict_from_arrays
from .simulation import (
    ScenarioSpec,
    reference_scenarios,
    replicate_generators,
    run_study,
)
from .types import AugmentedModel

PREDICT_SEED_SALT = 0x5EED


def _load_scenario(spec_arg: str) -> ScenarioSpec:
    path = Path(spec_arg)
    if path.exists():
        return ScenarioSpec.from_file(path)
    builtin = reference_scenarios()
    if spec_arg in builtin:
        return builtin[spec_arg]
    raise ValidationError(
        f"scenario {spec_arg!r} is neither a file nor one of {sorted(builtin)}"
    )


def _cmd_simulate(args) -> int:
    spec = _load_scenario(args.scenario)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    io.write_phases_csv(spec.plan, outdir / "phases.csv")
    with (outdir / "scenario.json").open("w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    from .simulation import generate

    for rep, rng in enumerate(replicate_generators(spec)):
        history, truth = generate(spec, rng)
        io.write_detections_csv(history, outdir / f"detections_{rep + 1:03d}.csv")
        io.write_truth_csv(truth, outdir / f"truth_{rep + 1:03d}.csv")
    print(f"wrote {spec.replicates} data sets for {spec.scenario_id} to {outdir}")
    return 0


def _print_summary(summary, quantities) -> None:
    print(f"{'quantity':<16}{'mean':>14}{'sd':>14}{'2.5%':>14}{'97.5%':>14}{'rhat':>10}")
    for name in quantities:
        row = summary[name]
        rhat = "" if row.rhat is None else f"{row.rhat:.3f}"
        print(
            f"{name:<16}{row.mean:>14.6g}{row.sd:>14.6g}"
            f"{row.q2_5:>14.6g}{row.q97_5:>14.6g}{rhat:>10}"
        )


def _cmd_fit(args) -> int:
    plan = io.read_phases_csv(args.phases)
    history, ingest = io.read_detections_csv(args.data, plan)
    cfg = io.AnalysisConfig.from_file(args.config)
    if cfg.variant != "ungrouped":
        raise ValidationError(
            "config variant is 'grouped'; use the fit-grouped command"
        )
    model = AugmentedModel(M=cfg.bound, history=history)
    chains = run(model, cfg.run)
    summary = summarize(chains)

    warnings = summary.convergence_warnings()
    if history.bug_count_observed == 0:
        warnings.append(
            "no detected bugs in the data; the population posterior is "
            "dominated by the prior"
        )
    if ingest.multi_detection_count:
        print(
            f"note: {ingest.multi_detection_count} of {ingest.n_bugs} bugs "
            f"({100 * ingest.multi_detection_fraction:.1f}%) were detected "
            "more than once in their detection phase"
        )
    payload = {
        "command": "fit",
        "data": str(args.data),
        "phases": str(args.phases),
        "config": cfg.raw,
        "ingestion": {
            "n_rows": ingest.n_rows,
            "n_bugs": ingest.n_bugs,
            "multi_detection_count": ingest.multi_detection_count,
            "extra_columns": list(ingest.extra_columns),
        },
    }
    io.write_fit_outputs(
        args.out, chains, summary, payload, plan,
        observed_phase=model.compiled.detection_phase,
        warnings=warnings,
    )
    _print_summary(summary, chains.quantities())
    for message in warnings:
        print(f"warning: {message}", file=sys.stderr)
    print(f"fit artifacts written to {args.out}")
    return 0


def _cmd_fit_grouped(args) -> int:
    cfg = io.AnalysisConfig.from_file(args.config)
    if cfg.variant == "ungrouped" and not args.allow_variant_mismatch:
        raise ValidationError(
            "config variant is 'ungrouped'; set \"variant\": \"grouped\" "
            "in the config for grouped fits"
        )
    plan = io.read_phases_csv(args.phases) if args.phases else None
    data = io.read_grouped_csv(
        args.data,
        bound=cfg.bound,
        plan=plan,
        detected_offset=cfg.detected_offset,
        undetected_mean=cfg.undetected_mean,
    )
    model = GroupedModel(data)
    chains = run_grouped(model, cfg.run)
    summary = summarize(chains)
    warnings = summary.convergence_warnings()

    grouped_payload = {
        "n_groups_observed": data.n_groups_observed,
        "bugs_detected": data.bugs_detected,
        "detected_offset": data.detected_offset,
        "undetected_mean": model.undetected_mean,
    }
    if args.epsilon is not None:
        remaining = chains.pooled("remaining_size")
        grouped_payload["epsilon"] = args.epsilon
        grouped_payload["reliability_at_end"] = float(
            (remaining <= args.epsilon).mean()
        )
    payload = {
        "command": "fit-grouped",
        "data": str(args.data),
        "config": cfg.raw,
    }
    io.write_fit_outputs(
        args.out, chains, summary, payload, data.plan,
        observed_phase=model.compiled.detection_phase,
        warnings=warnings,
        grouped_payload=grouped_payload,
    )
    _print_summary(summary, chains.quantities())
    if "reliability_at_end" in grouped_payload:
        print(
            f"reliability after phase {data.plan.n_phases} at threshold "
            f"{args.epsilon:g}: {grouped_payload['reliability_at_end']:.3f}"
        )
    for message in warnings:
        print(f"warning: {message}", file=sys.stderr)
    print(f"fit artifacts written to {args.out}")
    return 0


def _parse_future_inputs(raw: str | None):
    if raw is None:
        return None
    if "," in raw:
        return tuple(int(x) for x in raw.split(",") if x.strip() != "")
    return int(raw)


def _cmd_predict(args) -> int:
    fit = io.read_fit_dir(args.fit)
    cfg = PredictionConfig(
        epsilon=args.epsilon,
        horizon=args.horizon,
        future_inputs=_parse_future_inputs(args.future_inputs),
        target=args.target,
    )
    if args.seed is not None:
        seed = int(args.seed)
    else:
        seed = int(fit.manifest["seeds"]["root_seed"])
    rng = np.random.default_rng(np.random.SeedSequence((seed, PREDICT_SEED_SALT)))
    result = predict_from_arrays(
        sizes=fit.sizes,
        included=fit.included,
        rates=fit.rates,
        observed_phase=fit.observed_phase,
        plan=fit.plan,
        cfg=cfg,
        rng=rng,
    )
    outdir = Path(args.out) if args.out else Path(args.fit)
    io.write_prediction_outputs(outdir, result, fit.plan)
    if result.crossing_phase is None:
        print(
            f"reliability never reaches {cfg.target:g} within {result.horizon} "
            f"phases at threshold {cfg.epsilon:g}"
        )
    else:
        print(
            f"stopping phase {result.crossing_phase} "
            f"(first phase with reliability >= {cfg.target:g} at threshold "
            f"{cfg.epsilon:g}; {result.horizon} phase horizon)"
        )
    print(f"prediction artifacts written to {outdir}")
    return 0


def _cmd_study(args) -> int:
    spec = _load_scenario(args.scenario)
    from .engine import RunConfig
    from .samplers import SamplerConfig

    template = RunConfig(
        n_chains=args.chains,
        n_iterations=args.iterations,
        burn_in=args.burn_in,
        thin=args.thin,
        sampler=SamplerConfig(rng_seed=0),
    )

    def progress(done, total, rep):
        n_row = rep.estimates["N"]
        print(
            f"replicate {done}/{total}: detected {rep.n_detected}, "
            f"N mean {n_row['mean']:.1f} CI ({n_row['q2_5']:.0f}, {n_row['q97_5']:.0f})",
            file=sys.stderr,
        )

    report = run_study(
        spec,
        m_bound=args.bound,
        run_template=template,
        replicates=args.replicates,
        progress=progress,
    )
    io.write_study_outputs(args.out, report)
    params = report.parameter_summary()
    for name, block in params.items():
        print(
            f"{name}: relative bias mean {block['relative_bias']['mean']:+.3f}, "
            f"cv mean {block['cv']['mean']:.3f}, coverage {block['coverage']:.2f}"
        )
    print(f"study outputs written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sizebiased",
        description=(
            "Bayesian size-biased estimation of bug populations, remaining "
            "bug size and software reliability from phase-wise testing data."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate scenario data sets")
    p.add_argument("--scenario", required=True,
                   help="scenario JSON file or a builtin name (set1..set4)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="fit the per-bug model to a detection log")
    p.add_argument("--data", required=True, help="detections CSV (bug_id,phase,detections)")
    p.add_argument("--phases", required=True, help="phase table CSV (phase,inputs)")
    p.add_argument("--config", required=True, help="analysis config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("predict", help="reliability and stopping phase from a fit")
    p.add_argument("--fit", required=True, help="fit output directory")
    p.add_argument("--epsilon", required=True, type=float,
                   help="remaining-size threshold (inf allowed)")
    p.add_argument("--future-inputs", default=None,
                   help="inputs per future phase: one integer or a comma list")
    p.add_argument("--horizon", type=int, default=None,
                   help="total phases incl. observed (default observed + 25)")
    p.add_argument("--target", type=float, default=0.95, help="reliability target")
    p.add_argument("--seed", type=int, default=None,
                   help="prediction RNG seed (default: derived from the fit seed)")
    p.add_argument("--out", default=None, help="output directory (default: fit dir)")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("fit-grouped", help="fit the grouped model to a group log")
    p.add_argument("--data", required=True,
                   help="grouped CSV (group_id,phase,inputs,detected_count,group_size)")
    p.add_argument("--config", required=True, help="analysis config JSON")
    p.add_argument("--phases", default=None,
                   help="optional phase table CSV for phases without detections")
    p.add_argument("--epsilon", type=float, default=None,
                   help="also report reliability at the end of testing")
    p.add_argument("--allow-variant-mismatch", action="store_true",
                   help=argparse.SUPPRESS)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_fit_grouped)

    p = sub.add_parser("study", help="replication study on one scenario")
    p.add_argument("--scenario", required=True,
                   help="scenario JSON file or a builtin name (set1..set4)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--replicates", type=int, default=None,
                   help="override the scenario's replicate count")
    p.add_argument("--bound", type=int, default=None,
                   help="augmentation bound for fits (default: 2x true N)")
    p.add_argument("--chains", type=int, default=3)
    p.add_argument("--iterations", type=int, default=10_000)
    p.add_argument("--burn-in", type=int, default=5_000, dest="burn_in")
    p.add_argument("--thin", type=int, default=1)
    p.set_defaults(func=_cmd_study)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SizeBiasedError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
