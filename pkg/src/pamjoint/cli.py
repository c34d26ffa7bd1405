"""Command-line front end.

Every subcommand writes into ``<out>/<subcommand>/``: a ``report.txt`` of
``key = value`` lines, the effective configuration, and CSV tables.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import acceptance, cascade, identification, lsdp, lti
from .config import (ConfigError, ExperimentConfig, dump_config, load_config, write_csv,
                     write_report)
from .plant import Plant
from .uncertainty import PAPER_MODEL, UncertainModel, perturbed_tf, tf_to_ss, vertex_perturbations

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


def _outdir(args, cfg: ExperimentConfig, sub: str) -> Path:
    d = Path(args.out or cfg.out) / sub
    d.mkdir(parents=True, exist_ok=True)
    (d / "config_used.txt").write_text(dump_config(cfg))
    return d


def _weight_names(args, cfg: ExperimentConfig, default_all: bool) -> list[str]:
    choice = args.weights or ("all" if default_all else cfg.selected_weight)
    if choice == "all":
        return list(cfg.weights)
    if choice not in cfg.weights:
        raise ConfigError(f"--weights: unknown weight {choice!r}")
    return [choice]


def _prefix(names: list[str], name: str) -> str:
    return f"{name}." if len(names) > 1 else ""


def resolve_model(cfg: ExperimentConfig) -> UncertainModel:
    """Uncertain model used for design: the configured one or a fresh identification."""
    if cfg.model_source == "paper":
        return cfg.model
    res = identification.identify_plant(Plant(cfg.plant), cfg.identification, cfg.inner,
                                        seed=cfg.seed)
    try:
        return UncertainModel(**res.aggregate)
    except ValueError as exc:
        raise ValueError(f"identified model cannot be used for design: {exc}") from None


def cmd_identify(args, cfg: ExperimentConfig) -> int:
    out = _outdir(args, cfg, "identify")
    res = identification.identify_plant(Plant(cfg.plant), cfg.identification, cfg.inner,
                                        seed=cfg.seed)
    rep: dict[str, object] = {"n_segments": len(res.models)}
    for i, (seg, m) in enumerate(zip(res.dataset.segments, res.models)):
        write_csv(out / f"segment_{i:02d}.csv", {"t": seg.t, "p": seg.p, "theta": seg.theta})
        rep.update({f"segment_{i}.p_lo": seg.p_lo, f"segment_{i}.p_hi": seg.p_hi,
                    f"segment_{i}.mean_theta": float(np.mean(seg.theta)),
                    f"segment_{i}.clamped": seg.clamped,
                    f"segment_{i}.j": m.j, f"segment_{i}.c": m.c, f"segment_{i}.k": m.k})
    write_csv(out / "models.csv", {"segment": np.arange(len(res.models)),
                                   "j": [m.j for m in res.models],
                                   "c": [m.c for m in res.models],
                                   "k": [m.k for m in res.models]})
    rep.update({f"identified.{k}": v for k, v in res.aggregate.items()})
    rep.update({f"table_recomputed.{k}": v
                for k, v in identification.aggregate_stats(identification.PAPER_TABLE3).items()})
    rep.update({f"table_printed.{k}": getattr(PAPER_MODEL, k)
                for k in ("j_m", "p_j", "c_m", "p_c", "k_m", "p_k")})
    write_report(out / "report.txt", rep)
    return EXIT_OK


def _bode_columns(res: lsdp.SynthesisResult, g_nom, omega) -> dict[str, np.ndarray]:
    cols = {"omega": omega}
    for label, sys_ in (("G", g_nom), ("Gs", res.shaped_plant),
                        ("K", lsdp.tracking_controller(res)),
                        ("L", lti.series(lsdp.tracking_controller(res), g_nom))):
        h = lti.freq_response(sys_, omega).siso()
        cols[f"{label}_mag_db"] = 20 * np.log10(np.abs(h))
        cols[f"{label}_phase_deg"] = np.degrees(np.unwrap(np.angle(h)))
    return cols


def cmd_synthesize(args, cfg: ExperimentConfig) -> int:
    out = _outdir(args, cfg, "synthesize")
    um = resolve_model(cfg)
    g = tf_to_ss(perturbed_tf(um))
    names = _weight_names(args, cfg, default_all=False)
    rep: dict[str, object] = {}
    for name in names:
        res = lsdp.synthesize(g, cfg.weights[name], cfg.margin_factor)
        crit = lsdp.robust_criterion_norm(res, cfg.eps_required)
        sig = lsdp.sigma_report(res, g)
        p = _prefix(names, name)
        rep.update({f"{p}gamma": res.gamma, f"{p}gamma_min": res.gamma_min,
                    f"{p}one_over_gamma": res.epsilon,
                    f"{p}criterion_norm": crit.norm, f"{p}criterion_epsilon": crit.epsilon,
                    f"{p}eps_required": crit.eps_required, f"{p}robustly_stable": crit.passed,
                    f"{p}bandwidth": sig.bandwidth, f"{p}loop_crossover": sig.loop_crossover,
                    f"{p}shaped_crossover": sig.shaped_crossover,
                    f"{p}controller_order": res.K_final.n_states})
        write_csv(out / f"sigma_{name}.csv", sig.curves())
        write_csv(out / f"bode_{name}.csv", _bode_columns(res, g, sig.omega))
    write_report(out / "report.txt", rep)
    return EXIT_OK


def cmd_step_sweep(args, cfg: ExperimentConfig) -> int:
    out = _outdir(args, cfg, "step-sweep")
    um = resolve_model(cfg)
    names = _weight_names(args, cfg, default_all=True)
    sweep = cascade.step_sweep(um, {n: cfg.weights[n] for n in names},
                               t_end=cfg.sweep.t_end, dt=cfg.sweep.dt,
                               margin_factor=cfg.margin_factor)
    stride = max(1, int(round(0.01 / cfg.sweep.dt)))
    verts = list(vertex_perturbations())
    summary = {"vertex": np.arange(len(verts)),
               "delta_j": [d.delta_j for d in verts],
               "delta_c": [d.delta_c for d in verts],
               "delta_k": [d.delta_k for d in verts]}
    rep: dict[str, object] = {"csv_sample_time": stride * cfg.sweep.dt}
    for name, r in sweep.items():
        t = r.t[::stride]
        write_csv(out / f"step_{name}.csv",
                  {"t": t, **{f"y_{i:02d}": r.responses[i, ::stride] for i in range(len(verts))}})
        write_csv(out / f"accel_{name}.csv",
                  {"t": t, **{f"a_{i:02d}": r.accelerations[i, ::stride]
                              for i in range(len(verts))}})
        summary[f"peak_accel_{name}"] = r.peak_accelerations
        summary[f"final_error_{name}"] = r.final_errors
        rep.update({f"{name}.gamma": r.synthesis.gamma,
                    f"{name}.stable_vertices": int(np.sum(r.stable)),
                    f"{name}.max_steady_state_error": float(np.max(r.final_errors)),
                    f"{name}.aggregate_peak_acceleration": r.aggregate_peak_acceleration})
    write_csv(out / "accelerations.csv", summary)
    acc = {n: r.aggregate_peak_acceleration for n, r in sweep.items()}
    rep["smallest_peak_acceleration"] = min(acc, key=acc.get)
    write_report(out / "report.txt", rep)
    return EXIT_OK


def cmd_track(args, cfg: ExperimentConfig) -> int:
    out = _outdir(args, cfg, "track")
    um = resolve_model(cfg)
    g = tf_to_ss(perturbed_tf(um))
    names = _weight_names(args, cfg, default_all=False)
    traj = cascade.make_trajectory(cfg.trajectory, 1.0 / cfg.inner.rate_inner)
    rep: dict[str, object] = {}
    for name in names:
        res = lsdp.synthesize(g, cfg.weights[name], cfg.margin_factor)
        log = cascade.simulate(Plant(cfg.plant), lsdp.tracking_controller(res), traj,
                               cfg.inner, cfg.outer)
        write_csv(out / f"log_{name}.csv", {k: log[k] for k in cascade.LOG_COLUMNS})
        metrics = cascade.compute_metrics(log, cfg.trajectory)
        p = _prefix(names, name)
        rep.update({f"{p}{k}": v for k, v in metrics.as_report().items()})
    write_report(out / "report.txt", rep)
    return EXIT_OK


def cmd_verify(args, cfg: ExperimentConfig) -> int:
    out = _outdir(args, cfg, "verify")
    outcomes = acceptance.run_all(progress=lambda o: print(o.line(), flush=True))
    rep: dict[str, object] = {}
    for o in outcomes:
        rep[f"criterion_{o.key}"] = "PASS" if o.passed else "FAIL"
        rep[f"criterion_{o.key}.measured"] = o.measured
    rep["all_passed"] = all(o.passed for o in outcomes)
    write_report(out / "report.txt", rep)
    return EXIT_OK if rep["all_passed"] else EXIT_CHECK_FAILED


COMMANDS = {"identify": cmd_identify, "synthesize": cmd_synthesize,
            "step-sweep": cmd_step_sweep, "track": cmd_track, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pamjoint",
                                     description="Robust cascade control of a muscle-driven joint.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None,
                        help="config file, or 'paper-defaults' (the default)")
        sp.add_argument("--out", default=None, help="output root directory")
        sp.add_argument("--seed", type=int, default=None, help="overrides [run] seed")
        sp.add_argument("--weights", default=None,
                        help="weight name from the config (e.g. w11, w12, w13) or 'all'")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error in {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
