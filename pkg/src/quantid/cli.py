"""Command-line entry point: ``quantid <subcommand> ...``.

Exit codes: 0 ok, 2 configuration, 3 robust-PE violation, 4 infeasible
synthesis, 5 numerical failure (including failed verification), 6 I/O.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .bound import check_robust_pe, compute_bound
from .errors import (
    InvalidInputError,
    PersistentExcitationError,
    QuantidError,
    RobustPEViolation,
    ShapeError,
)
from .linalg import LtiModel, load_cost, load_model, save_model, spectral_radius
from .quantizer import BUDGET_MODES, ChannelQuantizers, budget_from_resolution, quantize_trajectories
from .simulation import (
    PRESETS,
    RESULT_COLUMNS,
    ExperimentConfig,
    Preset,
    fit_to_ranges,
    finite_cost,
    generate_training,
    get_preset,
    pilot_ranges,
    rep_rng,
    run_experiment,
    simulate_closed_loop,
)
from .synthesis import SynthesisResult, closed_loop, synthesize, verify_gcc
from .sysid import build_data_matrices, identification_report, identify

EXIT_OK, EXIT_CONFIG, EXIT_PE, EXIT_INFEASIBLE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4, 5, 6

log = logging.getLogger("quantid")


class StageFailure(Exception):
    def __init__(self, code: int, stage: str, message: str, details: dict | None = None):
        super().__init__(message)
        self.code, self.stage, self.details = code, stage, details or {}


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_plant(p, default_preset="dc_motor"):
    p.add_argument("--preset", choices=sorted(PRESETS), default=default_preset)
    p.add_argument("--model", help="model JSON; overrides --preset")
    p.add_argument("--cost", help="cost weights JSON {Q, R}; default from preset (identity)")
    p.add_argument("--x0-box", type=float, default=0.1, help="half-width of the initial-state box (custom model)")
    p.add_argument("--u-box", type=float, default=0.1, help="half-width of the input box (custom model)")


def _add_training(p):
    p.add_argument("--trajectories", type=int, default=150)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quantid",
        description="Identify a linear model from quantized data, bound its error and design a robust controller.",
    )
    parser.add_argument("--out", default=None, help="output directory (env QUANTID_OUT, default ./quantid-out)")
    parser.add_argument("--config", help="replay a recorded config.json")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate", help="generate open-loop training data")
    _add_plant(p)
    _add_training(p)

    p = sub.add_parser("quantize", help="quantize a trajectory CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--quantizer", help="quantizer config JSON; otherwise --bits with pilot ranges")
    p.add_argument("--bits", type=int, default=None)
    p.add_argument("--budget", choices=BUDGET_MODES, default=None)
    _add_plant(p)
    _add_training(p)

    p = sub.add_parser("identify", help="least-squares model from a (quantized) trajectory CSV")
    p.add_argument("--data", required=True)

    p = sub.add_parser("bound", help="identification error bound from quantized data")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="identified model JSON")
    p.add_argument("--quantizer", required=True)

    p = sub.add_parser("synthesize", help="guaranteed-cost controller for an identified model")
    p.add_argument("--model", required=True, help="identified model JSON")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--rho", type=float)
    g.add_argument("--bound", help="bound JSON from the bound subcommand")
    p.add_argument("--cost")
    p.add_argument("--x0", type=_floats, default=None)

    p = sub.add_parser("verify", help="sampling audit of a controller")
    p.add_argument("--controller", required=True)
    p.add_argument("--model", required=True, help="identified model JSON")
    p.add_argument("--cost")
    p.add_argument("--rho", type=float, default=None, help="default: the controller's rho")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truth", help="true model JSON for closed-loop checks")
    p.add_argument("--horizon", type=int, default=2000)

    p = sub.add_parser("pipeline", help="simulate, quantize, identify, bound, synthesize, verify")
    _add_plant(p)
    _add_training(p)
    p.add_argument("--bits", type=int, default=14)
    p.add_argument("--budget", choices=BUDGET_MODES, default="half")
    p.add_argument("--rho", type=float, default=None, help="override the computed bound")
    p.add_argument("--x0", type=_floats, default=None)
    p.add_argument("--horizon", type=int, default=2000)
    p.add_argument("--samples", type=int, default=1000)

    p = sub.add_parser("experiment", help="Monte-Carlo sweep over repetitions and word-lengths")
    _add_plant(p)
    _add_training(p)
    p.add_argument("--repetitions", type=int, default=50)
    p.add_argument("--bits", type=_ints, default=[8, 10, 12, 14])
    p.add_argument("--budget", choices=BUDGET_MODES, default="half")
    p.add_argument("--horizon", type=int, default=2000)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-plots", dest="plots", action="store_false")
    return parser


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get("QUANTID_OUT", "quantid-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _plant(args) -> Preset:
    if getattr(args, "model", None) and args.command in ("simulate", "quantize", "pipeline", "experiment"):
        cost = load_cost(args.cost) if args.cost else None
        return Preset.custom(load_model(args.model), x0_box=args.x0_box, u_box=args.u_box, cost=cost)
    preset = get_preset(args.preset)
    if getattr(args, "cost", None):
        preset = dataclasses.replace(preset, cost=load_cost(args.cost))
    return preset


def _record(out: Path, args, extra: dict | None = None):
    rec = {"command": args.command, "args": {k: v for k, v in vars(args).items() if k not in ("config",)}}
    if extra:
        rec["resolved"] = extra
    dataio.write_json(out / "config.json", rec)


def cmd_simulate(args, out):
    preset = _plant(args)
    trajs = generate_training(preset, args.trajectories, args.steps, rep_rng(args.seed, 0))
    dataio.write_trajectories_csv(out / "data.csv", trajs)
    dataio.write_json(
        out / "manifest.json",
        {
            "plant": preset.name,
            "model": preset.model.to_dict(),
            "n": preset.model.n,
            "m": preset.model.m,
            "trajectories": args.trajectories,
            "steps": args.steps,
            "T": args.trajectories * args.steps,
            "seed": args.seed,
            "x0_box": preset.train_x0_box,
            "u_box": preset.train_u_box,
        },
    )
    _record(out, args)
    print(f"wrote {out / 'data.csv'} ({len(trajs)} trajectories x {args.steps} steps)")
    return EXIT_OK


def _quantizers(args) -> tuple[ChannelQuantizers, str]:
    if args.quantizer:
        cfg = dataio.read_json(args.quantizer)
        ch = ChannelQuantizers.from_config(cfg)
        if args.bits is not None:
            ch = ch.with_bits(args.bits)
        return ch, args.budget or cfg.get("budget", "half")
    if args.bits is None:
        raise InvalidInputError("give either --quantizer or --bits")
    sr, ir = pilot_ranges(_plant(args), args.trajectories, args.steps)
    return ChannelQuantizers.uniform(args.bits, sr, ir), args.budget or "half"


def _scale_and_quantize(trajs, ch: ChannelQuantizers):
    data = build_data_matrices(trajs)
    sr = [(q.s_min, q.s_max) for q in ch.state_specs]
    ir = [(q.s_min, q.s_max) for q in ch.input_specs]
    _, c = fit_to_ranges(data, sr, ir)
    scaled = [(c * x, c * u) for x, u in trajs]
    return quantize_trajectories(scaled, ch), c


def cmd_quantize(args, out):
    trajs = dataio.read_trajectories_csv(args.data)
    ch, budget = _quantizers(args)
    if (trajs[0][0].shape[0], trajs[0][1].shape[0]) != (ch.n, ch.m):
        raise ShapeError("quantizer channels do not match the data dimensions")
    qtrajs, c = _scale_and_quantize(trajs, ch)
    dataio.write_trajectories_csv(out / "quantized.csv", qtrajs)
    dataio.write_json(out / "quantizer.json", ch.to_config(budget))
    dataio.write_json(out / "budget.json", {**budget_from_resolution(ch, budget).to_dict(), "scale_c": c})
    _record(out, args)
    print(f"wrote {out / 'quantized.csv'} (scale c = {c:.6g})")
    return EXIT_OK


def cmd_identify(args, out):
    data = build_data_matrices(dataio.read_trajectories_csv(args.data))
    est = identify(data)
    save_model(est.as_lti(), out / "model.json")
    dataio.write_json(out / "identify_report.json", identification_report(est, data))
    _record(out, args)
    print(f"wrote {out / 'model.json'}")
    return EXIT_OK


def _bound_stage(est, data, budget, out):
    ok, margin = check_robust_pe(data, budget)
    if not ok:
        raise StageFailure(EXIT_PE, "bound", f"robust PE violated (margin {margin:.6g})", {"margin": margin})
    rep = compute_bound(est, data, budget)
    dataio.write_json(out / "bound.json", rep.to_dict())
    return rep


def cmd_bound(args, out):
    data = build_data_matrices(dataio.read_trajectories_csv(args.data))
    cfg = dataio.read_json(args.quantizer)
    ch = ChannelQuantizers.from_config(cfg)
    budget = budget_from_resolution(ch, cfg.get("budget", "half"))
    est = identify(data)
    model = load_model(args.model)
    if not np.allclose(model.G, est.G_hat, rtol=1e-9, atol=1e-12):
        log.warning("model file differs from the least-squares fit of --data; bound uses the model file")
    from .sysid import IdentifiedModel

    est = IdentifiedModel(model.G, model.n, model.m, est.gram)
    rep = _bound_stage(est, data, budget, out)
    _record(out, args)
    print(f"rho = {rep.rho:.6g} (robust PE margin {rep.margin:.6g})")
    return EXIT_OK


def _synth_stage(model, rho, cost, x0, out):
    res = synthesize(model, rho, cost, x0=x0)
    dataio.write_json(out / "controller.json", res.to_dict())
    if res.solver_status == "infeasible":
        raise StageFailure(EXIT_INFEASIBLE, "synthesize", f"LMI infeasible for rho = {rho:.6g}", {"attempts": res.attempts})
    if not res.feasible:
        raise StageFailure(EXIT_NUMERICAL, "synthesize", "solver failed to certify a point", {"attempts": res.attempts})
    return res


def _cost_for(args, n, m):
    from .linalg import CostWeights

    return load_cost(args.cost) if getattr(args, "cost", None) else CostWeights.identity(n, m)


def cmd_synthesize(args, out):
    model = load_model(args.model)
    rho = args.rho if args.rho is not None else float(dataio.read_json(args.bound)["rho"])
    x0 = args.x0 if args.x0 is not None else [1.0] + [0.0] * (model.n - 1)
    res = _synth_stage(model, rho, _cost_for(args, model.n, model.m), x0, out)
    _record(out, args)
    print(f"controller ({res.solver_status}, {res.solver}): guaranteed cost {res.guaranteed_cost_x0:.6g}")
    return EXIT_OK


def _verify_stage(res, model, rho, cost, samples, seed, out, truth=None, horizon=2000, x0=None):
    audit = verify_gcc(res, model, rho, cost, samples, seed)
    report = {"audit": audit.to_dict()}
    if truth is not None:
        report["spec_radius"] = spectral_radius(closed_loop(truth, res.K))
        if x0 is not None:
            states, inputs = simulate_closed_loop(truth, res.K, x0, horizon)
            report["finite_cost"] = finite_cost(states, inputs, cost)
            report["guaranteed_cost"] = res.guaranteed_cost(x0)
            report["final_state_norm"] = float(np.linalg.norm(states[:, -1]))
    dataio.write_json(out / "verify.json", report)
    if not audit.passed:
        raise StageFailure(EXIT_NUMERICAL, "verify", f"{audit.violations} sampled uncertainties violate the certificate")
    if truth is not None and report["spec_radius"] >= 1:
        raise StageFailure(EXIT_NUMERICAL, "verify", "true closed loop is not stable")
    if "finite_cost" in report and report["finite_cost"] > report["guaranteed_cost"] + 1e-6:
        raise StageFailure(EXIT_NUMERICAL, "verify", "finite-horizon cost exceeds the guaranteed cost")
    return report


def cmd_verify(args, out):
    res = SynthesisResult.from_dict(dataio.read_json(args.controller))
    if not res.feasible:
        raise InvalidInputError("controller file does not hold a feasible result")
    model = load_model(args.model)
    rho = args.rho if args.rho is not None else res.rho
    truth = load_model(args.truth) if args.truth else None
    rep = _verify_stage(
        res, model, rho, _cost_for(args, model.n, model.m), args.samples, args.seed, out,
        truth=truth, horizon=args.horizon, x0=res.x0,
    )
    _record(out, args)
    print(f"verification passed: worst eigenvalue {rep['audit']['worst_max_eig']:.3g}")
    return EXIT_OK


def cmd_pipeline(args, out):
    preset = _plant(args)
    truth = preset.model
    trajs = generate_training(preset, args.trajectories, args.steps, rep_rng(args.seed, 0))
    dataio.write_trajectories_csv(out / "data.csv", trajs)
    sr, ir = pilot_ranges(preset, args.trajectories, args.steps)
    ch = ChannelQuantizers.uniform(args.bits, sr, ir)
    qtrajs, c = _scale_and_quantize(trajs, ch)
    dataio.write_trajectories_csv(out / "quantized.csv", qtrajs)
    dataio.write_json(out / "quantizer.json", ch.to_config(args.budget))
    budget = budget_from_resolution(ch, args.budget)
    data = build_data_matrices(qtrajs)
    est = identify(data)
    save_model(est.as_lti(), out / "model.json")
    dataio.write_json(out / "identify_report.json", identification_report(est, data))
    summary = {"plant": preset.name, "bits": args.bits, "scale_c": c, "stages": {}}
    _record(out, args, {"state_ranges": sr, "input_ranges": ir})
    try:
        rep = _bound_stage(est, data, budget, out)
        summary["stages"]["bound"] = {"rho": rep.rho, "margin": rep.margin}
        rho = args.rho if args.rho is not None else rep.rho
        x0 = args.x0 if args.x0 is not None else list(preset.x0_regulation)
        res = _synth_stage(est, rho, preset.cost, x0, out)
        summary["stages"]["synthesize"] = {"rho": rho, "guaranteed_cost": res.guaranteed_cost_x0, "solver": res.solver}
        ver = _verify_stage(res, est, rho, preset.cost, args.samples, args.seed, out, truth, args.horizon, x0)
        summary["stages"]["verify"] = ver
    finally:
        dataio.write_json(out / "pipeline.json", summary)
    print(
        f"pipeline ok: rho = {summary['stages']['bound']['rho']:.4g}, "
        f"guaranteed cost {ver['guaranteed_cost']:.6g} >= finite cost {ver['finite_cost']:.6g}"
    )
    return EXIT_OK


def cmd_experiment(args, out):
    model = load_model(args.model) if args.model else None
    cfg = ExperimentConfig(
        preset=args.preset,
        model=model,
        trajectories=args.trajectories,
        steps=args.steps,
        repetitions=args.repetitions,
        bits=tuple(args.bits),
        seed=args.seed,
        horizon=args.horizon,
        budget=args.budget,
        gcc_samples=args.samples,
        workers=args.workers,
        keep_trajectories=args.plots,
    )
    _record(out, args, cfg.to_dict())
    results = run_experiment(cfg)
    dataio.write_results_csv(out / "results.csv", results.rows, RESULT_COLUMNS)
    summary = results.summary()
    dataio.write_json(out / "summary.json", summary)
    if args.plots:
        from .plotting import plot_panels, plot_phase_portraits

        name = cfg.resolved_preset().name
        plot_panels(results.rows, out / "panels.svg", title=name)
        plot_phase_portraits(results.portraits, cfg.bits, out / "phase_portraits.svg", title=name)
    for key, fit in summary["slopes"].items():
        print(f"slope_{key} = {fit['slope']:.4f} (r2 = {fit['r2']:.4f})")
    for b, entry in summary["per_bits"].items():
        print(f"b = {b}: robust PE {entry['robust_pe_ok']}/{entry['cells']}, feasible {entry['feasible']}/{entry['cells']}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "quantize": cmd_quantize,
    "identify": cmd_identify,
    "bound": cmd_bound,
    "synthesize": cmd_synthesize,
    "verify": cmd_verify,
    "pipeline": cmd_pipeline,
    "experiment": cmd_experiment,
}


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, StageFailure):
        return exc.code
    if isinstance(exc, (RobustPEViolation, PersistentExcitationError)):
        return EXIT_PE
    if isinstance(exc, (InvalidInputError, ShapeError, QuantidError)):
        return EXIT_CONFIG
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_NUMERICAL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.config:
        try:
            rec = dataio.read_json(args.config)
            recorded = argparse.Namespace(**rec["args"])
        except (OSError, KeyError, TypeError) as exc:
            print(f"cannot replay {args.config}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if args.out:
            recorded.out = args.out
        recorded.config = None
        args = recorded
    if not args.command:
        parser.print_help()
        return EXIT_CONFIG
    try:
        out = _out_dir(args)
    except OSError as exc:
        print(f"cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return COMMANDS[args.command](args, out)
    except Exception as exc:
        code = _exit_code(exc)
        if code == EXIT_NUMERICAL and not isinstance(exc, (StageFailure, QuantidError)):
            log.exception("unexpected failure")
        err = {
            "command": args.command,
            "stage": getattr(exc, "stage", args.command),
            "error": type(exc).__name__,
            "message": str(exc),
            "exit_code": code,
            "details": getattr(exc, "details", {}),
        }
        try:
            dataio.write_json(out / "error.json", err)
        except OSError:
            pass
        print(f"error ({err['stage']}): {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
