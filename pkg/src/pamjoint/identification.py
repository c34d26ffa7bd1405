"""Model-set identification of the pressure-to-angle dynamics.

The pressure range is cut into successive sub-ranges; in each one the
closed pressure loop drives a staircase-plus-multisine reference, and a
second-order model ``p = j theta'' + c theta' + k theta`` is fitted to the
deviations from the starting equilibrium. The set of local models is then
summarized by its mean and largest relative spread per coefficient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .cascade import InnerLoopConfig, inner_pressure_control
from .plant import Plant, equilibrium_angle, equilibrium_pressure
from .uncertainty import UncertainModel


class IdentificationError(ValueError):
    pass


class RankDeficientError(IdentificationError):
    """Regressor lacks excitation; ``k_estimate`` is the static gain fit alone."""

    def __init__(self, msg, k_estimate=float("nan")):
        super().__init__(msg)
        self.k_estimate = k_estimate


@dataclass(frozen=True)
class SecondOrderModel:
    j: float
    c: float
    k: float

    def __post_init__(self):
        if min(self.j, self.c, self.k) <= 0:
            raise IdentificationError(f"nonpositive coefficient in {self}")


# Ten local models of the hardware rig, and the printed summary row.
PAPER_TABLE3 = [
    SecondOrderModel(0.0023, 0.0423, 3.7428),
    SecondOrderModel(0.0025, 0.0394, 3.4660),
    SecondOrderModel(0.0023, 0.0386, 2.7861),
    SecondOrderModel(0.0022, 0.0348, 2.3160),
    SecondOrderModel(0.0022, 0.0358, 2.0670),
    SecondOrderModel(0.0025, 0.0378, 1.9153),
    SecondOrderModel(0.0022, 0.0480, 1.7545),
    SecondOrderModel(0.0025, 0.0550, 1.6836),
    SecondOrderModel(0.0029, 0.0354, 1.5652),
    SecondOrderModel(0.0037, 0.0339, 1.3847),
]


@dataclass(frozen=True)
class Segment:
    t: np.ndarray
    p: np.ndarray       # absolute pressure, Pa
    theta: np.ndarray   # rad
    p_lo: float
    p_hi: float
    clamped: bool = False

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


@dataclass(frozen=True)
class IdentificationDataset:
    segments: list[Segment]


@dataclass(frozen=True)
class IdentificationConfig:
    n_segments: int = 10
    theta_lo: float = 0.05
    theta_hi: float = 1.45
    duration: float = 8.0
    sample_rate: float = 500.0
    n_steps: int = 4
    multisine_fraction: float = 0.15
    multisine_freqs: tuple[float, ...] = (0.3, 0.7, 1.3, 2.1, 3.4)
    filter_cutoff: float = 10.0
    pressure_unit: float = 1100.0

    def __post_init__(self):
        if self.n_segments < 1 or self.duration <= 0 or self.sample_rate <= 0:
            raise ValueError(f"invalid identification config {self}")
        if not 0 < self.theta_lo < self.theta_hi < math.pi / 2:
            raise ValueError("need 0 < theta_lo < theta_hi < pi/2")


def segment_ranges(p_lo: float, p_hi: float, n: int) -> list[tuple[float, float]]:
    edges = np.linspace(p_lo, p_hi, n + 1)
    return list(zip(edges[:-1], edges[1:]))


def excitation(t: np.ndarray, lo: float, hi: float, cfg: IdentificationConfig,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed staircase over ``[lo, hi]`` plus a small random-phase multisine.

    Returns the reference and its time derivative. The signal starts at
    ``lo`` with zero slope so the run begins at equilibrium.
    """
    span = hi - lo
    amp = cfg.multisine_fraction * span / max(1, len(cfg.multisine_freqs))
    levels = lo + span * (np.arange(1, cfg.n_steps + 1) - 0.5) / cfg.n_steps
    T = t[-1] + (t[1] - t[0])
    step_len = T / (cfg.n_steps + 1)
    ramp = min(0.3, 0.25 * step_len)
    ref = np.full_like(t, lo)
    dref = np.zeros_like(t)
    prev = lo
    for i, level in enumerate(levels):
        t0 = (i + 1) * step_len
        x = np.clip((t - t0) / ramp, 0.0, 1.0)
        blend = (1 - np.cos(np.pi * x)) / 2
        ref += (level - prev) * blend
        inside = (x > 0) & (x < 1)
        dref[inside] += (level - prev) * np.pi / (2 * ramp) * np.sin(np.pi * x[inside])
        prev = level
    # multisine fades in so the start stays at rest
    t_fade = 0.5
    xf = np.clip(t / t_fade, 0.0, 1.0)
    fade = (1 - np.cos(np.pi * xf)) / 2
    dfade = np.pi / (2 * t_fade) * np.sin(np.pi * xf)
    for f in cfg.multisine_freqs:
        phase = rng.uniform(0, 2 * np.pi)
        w = 2 * np.pi * f
        base = np.sin(w * t + phase) - np.sin(phase)
        ref += amp * fade * base
        dref += amp * (dfade * base + fade * w * np.cos(w * t + phase))
    return ref, dref


def excite(plant: Plant, segment_index: int, cfg: IdentificationConfig = IdentificationConfig(),
           inner: InnerLoopConfig = InnerLoopConfig(), rng: np.random.Generator | None = None,
           p_range: tuple[float, float] | None = None) -> Segment:
    """Drive one pressure sub-range through the closed pressure loop and record ``(p, theta)``."""
    rng = np.random.default_rng(segment_index) if rng is None else rng
    p_lo, p_hi = p_range or default_pressure_range(plant, cfg)
    lo, hi = segment_ranges(p_lo, p_hi, cfg.n_segments)[segment_index]
    dt = 1.0 / inner.rate_inner
    n = int(round(cfg.duration / dt))
    t = np.arange(n) * dt
    ref, dref = excitation(t, lo, hi, cfg, rng)
    ff = InnerLoopConfig(kp_pressure=inner.kp_pressure, rate_inner=inner.rate_inner,
                         psi_floor=inner.psi_floor, use_feedforward=True)
    x = np.array([equilibrium_angle(lo, plant.params), 0.0, lo])
    p = np.empty(n)
    theta = np.empty(n)
    clamped = False
    for i in range(n):
        theta[i], p[i] = x[0], x[2]
        v, _ = inner_pressure_control(ref[i], dref[i], x, plant.params, ff)
        x, hit = plant.step(x, v, dt)
        clamped |= hit
    stride = max(1, int(round(inner.rate_inner / cfg.sample_rate)))
    return Segment(t=t[::stride], p=p[::stride], theta=theta[::stride], p_lo=lo, p_hi=hi,
                   clamped=clamped)


def default_pressure_range(plant: Plant, cfg: IdentificationConfig) -> tuple[float, float]:
    return (equilibrium_pressure(cfg.theta_lo, plant.params),
            equilibrium_pressure(cfg.theta_hi, plant.params))


def _zero_phase(x: np.ndarray, dt: float, cutoff: float | None) -> np.ndarray:
    if cutoff is None or cutoff >= 0.5 / dt:
        return x
    b, a = signal.butter(4, cutoff, fs=1.0 / dt)
    return signal.filtfilt(b, a, x)


def fit_second_order(p: np.ndarray, theta: np.ndarray, dt: float,
                     cutoff: float | None = None, trim: float = 0.05) -> SecondOrderModel:
    """Least-squares fit of ``p = j theta'' + c theta' + k theta``.

    Both signals pass through the same zero-phase low-pass (so the linear
    relation between them is preserved) before central differencing.
    ``trim`` drops that fraction of samples at each end.
    """
    p = np.asarray(p, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if p.shape != theta.shape or p.ndim != 1:
        raise IdentificationError("pressure and angle series must be 1-D and equal length")
    if len(p) < 50:
        raise IdentificationError("need at least 50 samples")
    pf = _zero_phase(p, dt, cutoff)
    th = _zero_phase(theta, dt, cutoff)
    thd = np.gradient(th, dt)
    thdd = np.gradient(thd, dt)
    k0 = max(2, int(trim * len(p)))
    sl = slice(k0, len(p) - k0)
    Phi = np.column_stack([thdd[sl], thd[sl], th[sl]])
    y = pf[sl]
    norms = np.linalg.norm(Phi, axis=0)
    k_only = float(th[sl] @ y / (th[sl] @ th[sl])) if norms[2] > 0 else float("nan")
    if np.min(norms) <= 1e-12 * max(np.max(norms), 1e-300):
        raise RankDeficientError("regressor is rank deficient (input not exciting)", k_only)
    sv = np.linalg.svd(Phi / norms, compute_uv=False)
    if sv[-1] < 1e-8 * sv[0]:
        raise RankDeficientError("regressor is rank deficient (input not exciting)", k_only)
    coef, *_ = np.linalg.lstsq(Phi, y, rcond=None)
    return SecondOrderModel(*map(float, coef))


def fit_segment(seg: Segment, cfg: IdentificationConfig = IdentificationConfig()) -> SecondOrderModel:
    """Fit on deviations from the segment's initial equilibrium, in model pressure units."""
    dp = (seg.p - seg.p[0]) / cfg.pressure_unit
    return fit_second_order(dp, seg.theta - seg.theta[0], seg.dt, cutoff=cfg.filter_cutoff)


def aggregate_stats(models: list[SecondOrderModel]) -> dict[str, float]:
    if not models:
        raise IdentificationError("no models to aggregate")
    out = {}
    for name in ("j", "c", "k"):
        z = np.array([getattr(m, name) for m in models])
        mean = float(z.sum() / len(z))
        out[f"{name}_m"] = mean
        out[f"p_{name}"] = float(np.max(np.abs(z - mean)) / mean)
    return out


def aggregate(models: list[SecondOrderModel]) -> UncertainModel:
    """Mean coefficients and maximum relative deviations as an uncertain model."""
    return UncertainModel(**aggregate_stats(models))


def simulate_model(model: SecondOrderModel, p: np.ndarray, dt: float) -> np.ndarray:
    """Angle response of ``1/(j s^2 + c s + k)`` to a sampled pressure input from rest."""
    sys = signal.lti([1.0], [model.j, model.c, model.k])
    t = np.arange(len(p)) * dt
    _, y, _ = signal.lsim(sys, p, t)
    return y


@dataclass
class IdentificationResult:
    dataset: IdentificationDataset
    models: list[SecondOrderModel]
    aggregate: dict[str, float]


def identify_plant(plant: Plant, cfg: IdentificationConfig = IdentificationConfig(),
                   inner: InnerLoopConfig = InnerLoopConfig(), seed: int = 0) -> IdentificationResult:
    rng = np.random.default_rng(seed)
    p_range = default_pressure_range(plant, cfg)
    segs = [excite(plant, i, cfg, inner, rng=rng, p_range=p_range) for i in range(cfg.n_segments)]
    models = [fit_segment(s, cfg) for s in segs]
    return IdentificationResult(IdentificationDataset(segs), models, aggregate_stats(models))
