"""Experiment configuration and line-oriented report / CSV files.

A config file is an INI-style text with the sections below; every key is
optional and unknown sections or keys are rejected with a message naming
them. :data:`PAPER_DEFAULTS` is the built-in configuration.
"""
from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .cascade import InnerLoopConfig, OuterLoopConfig, ReferenceTrajectory
from .identification import IdentificationConfig
from .lsdp import W1_CANDIDATES, ShapingWeights
from .plant import MechanicalParams, PamGeometry, PlantParams, PneumaticConstants, ValveModel
from .uncertainty import PAPER_MODEL, UncertainModel


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    t_end: float = 20.0
    dt: float = 1e-3

    def __post_init__(self):
        if not (self.t_end > 0 and 0 < self.dt < self.t_end):
            raise ValueError(f"invalid sweep config {self}")


@dataclass(frozen=True)
class ExperimentConfig:
    plant: PlantParams = field(default_factory=PlantParams)
    identification: IdentificationConfig = field(default_factory=IdentificationConfig)
    model_source: str = "paper"          # "paper" or "identified"
    model: UncertainModel = PAPER_MODEL
    weights: Mapping[str, ShapingWeights] = field(default_factory=lambda: dict(W1_CANDIDATES))
    selected_weight: str = "w13"
    margin_factor: float = 1.0
    eps_required: float = 0.25
    inner: InnerLoopConfig = field(default_factory=InnerLoopConfig)
    outer: OuterLoopConfig = field(default_factory=OuterLoopConfig)
    trajectory: ReferenceTrajectory = field(default_factory=ReferenceTrajectory)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    seed: int = 0
    out: str = "results"

    def __post_init__(self):
        if self.model_source not in ("paper", "identified"):
            raise ConfigError("model.source must be 'paper' or 'identified'")
        if self.selected_weight not in self.weights:
            raise ConfigError(f"weights.selected names unknown weight {self.selected_weight!r}")
        if self.margin_factor < 1.0:
            raise ConfigError("weights.margin_factor must be >= 1")
        if not 0 < self.eps_required < 1:
            raise ConfigError("weights.eps_required must lie in (0, 1)")
        if self.seed < 0:
            raise ConfigError("run.seed must be nonnegative")


PAPER_DEFAULTS = ExperimentConfig()


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none") else float(text)


# section -> key -> (target object, attribute, parser)
_PLANT_KEYS = {
    **{k: ("consts", k, float) for k in ("T", "R", "kappa", "eta", "p_supply", "p_atm")},
    **{k: ("geom", k, float) for k in ("L0", "r0", "V_dead")},
    "alpha0_deg": ("geom", "alpha0", lambda s: math.radians(float(s))),
    **{k: ("valve", k, float) for k in ("v_min", "v_neutral", "v_max", "area_gain")},
    **{k: ("mech", k, float) for k in ("l", "m", "r_crank", "c_visc", "theta_min", "theta_max")},
}
_IDENT_KEYS = {"n_segments": int, "theta_lo": float, "theta_hi": float, "duration": float,
               "sample_rate": float, "n_steps": int, "multisine_fraction": float,
               "multisine_freqs": _floats, "filter_cutoff": float}
_MODEL_KEYS = ("j_m", "c_m", "k_m", "p_j", "p_c", "p_k")
_LOOP_KEYS = {"kp_pressure": ("inner", float), "rate_inner": ("inner", float),
              "psi_floor": ("inner", float), "use_feedforward": ("inner", _bool),
              "rate_outer": ("outer", float), "pressure_unit": ("outer", float),
              "p_ref_min": ("outer", _opt_float), "p_ref_max": ("outer", _opt_float)}
_TRAJ_KEYS = {"plateaus": _floats, "hold": float, "blend": float}
_SWEEP_KEYS = {"t_end": float, "dt": float}
_SECTIONS = ("plant", "identification", "model", "weights", "loop", "trajectory", "sweep", "run")


def _parse(section: str, key: str, text: str, parser):
    try:
        return parser(text)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def parse_config(text: str, base: ExperimentConfig = PAPER_DEFAULTS) -> ExperimentConfig:
    """Overlay the settings in ``text`` on ``base``."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")

    def items(sec, allowed):
        if not cp.has_section(sec):
            return {}
        out = dict(cp.items(sec))
        for key in out:
            if key not in allowed:
                raise ConfigError(f"unknown key [{sec}] {key}")
        return out

    try:
        plant = base.plant
        parts = {name: getattr(plant, name) for name in ("consts", "geom", "valve", "mech")}
        for key, text_ in items("plant", _PLANT_KEYS).items():
            part, attr, conv = _PLANT_KEYS[key]
            parts[part] = replace(parts[part], **{attr: _parse("plant", key, text_, conv)})
        plant = PlantParams(**parts)

        ident = base.identification
        upd = {k: _parse("identification", k, v, _IDENT_KEYS[k])
               for k, v in items("identification", _IDENT_KEYS).items()}
        upd_pu = items("loop", _LOOP_KEYS).get("pressure_unit")
        if upd_pu is not None:
            upd["pressure_unit"] = _parse("loop", "pressure_unit", upd_pu, float)
        ident = replace(ident, **upd) if upd else ident

        mitems = items("model", set(_MODEL_KEYS) | {"source"})
        source = mitems.pop("source", base.model_source).strip()
        model = base.model
        if mitems:
            model = replace(model, **{k: _parse("model", k, v, float) for k, v in mitems.items()})

        weights = dict(base.weights)
        selected, margin, eps_req = base.selected_weight, base.margin_factor, base.eps_required
        if cp.has_section("weights"):
            for key, val in cp.items("weights"):
                if key == "selected":
                    selected = val.strip()
                elif key == "margin_factor":
                    margin = _parse("weights", key, val, float)
                elif key == "eps_required":
                    eps_req = _parse("weights", key, val, float)
                elif key.startswith("w"):
                    nums = _parse("weights", key, val, _floats)
                    if len(nums) not in (3, 4):
                        raise ConfigError(f"[weights] {key}: expected 'M, w0, A[, W2]'")
                    weights[key] = ShapingWeights(*nums)
                else:
                    raise ConfigError(f"unknown key [weights] {key}")

        inner_upd, outer_upd = {}, {}
        for key, val in items("loop", _LOOP_KEYS).items():
            target, conv = _LOOP_KEYS[key]
            (inner_upd if target == "inner" else outer_upd)[key] = _parse("loop", key, val, conv)
        inner = replace(base.inner, **inner_upd)
        outer = replace(base.outer, **outer_upd)

        traj = replace(base.trajectory, **{k: _parse("trajectory", k, v, _TRAJ_KEYS[k])
                                           for k, v in items("trajectory", _TRAJ_KEYS).items()})
        sweep = replace(base.sweep, **{k: _parse("sweep", k, v, _SWEEP_KEYS[k])
                                       for k, v in items("sweep", _SWEEP_KEYS).items()})
        run = items("run", {"seed", "out"})
        seed = _parse("run", "seed", run["seed"], int) if "seed" in run else base.seed
        out = run.get("out", base.out).strip()

        return ExperimentConfig(plant=plant, identification=ident, model_source=source,
                                model=model, weights=weights, selected_weight=selected,
                                margin_factor=margin, eps_required=eps_req, inner=inner,
                                outer=outer, trajectory=traj, sweep=sweep, seed=seed, out=out)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid config: {exc}") from None


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None or str(path) == "paper-defaults":
        return PAPER_DEFAULTS
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def _fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    if v is None:
        return "none"
    return str(v)


def dump_config(cfg: ExperimentConfig) -> str:
    """Render ``cfg`` as text that :func:`parse_config` reads back to an equal config."""
    p = cfg.plant
    lines = ["[plant]"]
    for key, (part, attr, _) in _PLANT_KEYS.items():
        val = getattr(getattr(p, part), attr)
        lines.append(f"{key} = {_fmt(math.degrees(val) if key == 'alpha0_deg' else val)}")
    lines.append("\n[identification]")
    for key in _IDENT_KEYS:
        lines.append(f"{key} = {_fmt(getattr(cfg.identification, key))}")
    lines.append("\n[model]")
    lines.append(f"source = {cfg.model_source}")
    for key in _MODEL_KEYS:
        lines.append(f"{key} = {_fmt(getattr(cfg.model, key))}")
    lines.append("\n[weights]")
    for name, w in cfg.weights.items():
        lines.append(f"{name} = {_fmt([w.M, w.w0, w.A, w.W2])}")
    lines += [f"selected = {cfg.selected_weight}", f"margin_factor = {_fmt(cfg.margin_factor)}",
              f"eps_required = {_fmt(cfg.eps_required)}", "\n[loop]"]
    for key, (target, _) in _LOOP_KEYS.items():
        lines.append(f"{key} = {_fmt(getattr(getattr(cfg, target), key))}")
    lines.append("\n[trajectory]")
    for key in _TRAJ_KEYS:
        lines.append(f"{key} = {_fmt(getattr(cfg.trajectory, key))}")
    lines.append("\n[sweep]")
    for f_ in fields(SweepConfig):
        lines.append(f"{f_.name} = {_fmt(getattr(cfg.sweep, f_.name))}")
    lines += ["\n[run]", f"seed = {cfg.seed}", f"out = {cfg.out}", ""]
    return "\n".join(lines)


def write_report(path: str | Path, items: Mapping[str, Any]) -> None:
    """One ``key = value`` line per entry, in insertion order."""
    Path(path).write_text("".join(f"{k} = {_fmt(v)}\n" for k, v in items.items()))


def read_report(path: str | Path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{n}: expected 'key = value'")
        out[key.strip()] = val.strip()
    return out


def read_uncertain_model(path: str | Path) -> UncertainModel:
    rep = read_report(path)
    try:
        return UncertainModel(**{k: float(rep[k]) for k in _MODEL_KEYS})
    except KeyError as exc:
        raise ValueError(f"{path}: missing key {exc.args[0]}") from None


def write_csv(path: str | Path, columns: Mapping[str, np.ndarray]) -> None:
    """Header row then one row per sample; floats written with full precision."""
    names = list(columns)
    arrays = [np.asarray(columns[k]) for k in names]
    n = len(arrays[0]) if arrays else 0
    if any(len(a) != n for a in arrays):
        raise ValueError("CSV columns must have equal length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*arrays):
            w.writerow([_fmt(x.item() if hasattr(x, "item") else x) for x in row])


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}
