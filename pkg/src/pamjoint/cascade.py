"""Cascaded tracking loop: feedback-linearizing pressure controller inside a
sampled H-infinity position controller, with reference generation, the
perturbed-model step sweep, and tracking metrics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lti, lsdp
from .lti import DiscreteStateSpace, StateSpace
from .plant import Plant, PlantParams, psi
from .uncertainty import UncertainModel, tf_to_ss, perturbed_tf, vertex_perturbations


@dataclass(frozen=True)
class InnerLoopConfig:
    kp_pressure: float = 25.0
    rate_inner: float = 1000.0
    psi_floor: float = 2.0e-4
    use_feedforward: bool = False

    def __post_init__(self):
        if self.kp_pressure <= 0 or self.rate_inner <= 0 or self.psi_floor <= 0:
            raise ValueError(f"invalid inner loop config {self}")


@dataclass(frozen=True)
class OuterLoopConfig:
    rate_outer: float = 100.0
    # Pa per unit of the identified model's pressure input
    pressure_unit: float = 1100.0
    p_ref_min: float | None = None
    p_ref_max: float | None = None

    def __post_init__(self):
        if self.rate_outer <= 0 or self.pressure_unit <= 0:
            raise ValueError(f"invalid outer loop config {self}")


@dataclass(frozen=True)
class ReferenceTrajectory:
    plateaus: tuple[float, ...] = (0.1, 1.27, 0.75, 0.23, 0.5, 1.4, 0.9, 0.35, 1.1, 0.6)
    hold: float = 4.0
    blend: float = 1.5

    def __post_init__(self):
        if len(self.plateaus) == 0:
            raise ValueError("trajectory needs at least one plateau")
        if self.hold <= 0 or self.blend <= 0:
            raise ValueError("hold and blend durations must be positive")
        if any(not 0 < a < math.pi / 2 for a in self.plateaus):
            raise ValueError("plateau angles must lie inside (0, pi/2)")

    @property
    def duration(self) -> float:
        return self.hold + (len(self.plateaus) - 1) * (self.blend + self.hold)

    def segments(self):
        """Yield ``(kind, t_start, t_end, theta_from, theta_to, plateau_index)``."""
        t = 0.0
        yield ("hold", t, t + self.hold, self.plateaus[0], self.plateaus[0], 0)
        t += self.hold
        for i in range(1, len(self.plateaus)):
            a, b = self.plateaus[i - 1], self.plateaus[i]
            yield ("blend", t, t + self.blend, a, b, i)
            t += self.blend
            yield ("hold", t, t + self.hold, b, b, i)
            t += self.hold


@dataclass
class TimeSeries:
    """Uniformly sampled multichannel log with a fixed column order."""

    columns: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, key: str) -> np.ndarray:
        return self.columns[key]

    @property
    def t(self) -> np.ndarray:
        return self.columns["t"]

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def names(self) -> list[str]:
        return list(self.columns)


def make_trajectory(cfg: ReferenceTrajectory, dt: float) -> TimeSeries:
    """Plateaus joined by half-cosine blends (C1, zero velocity at the joints)."""
    n = int(round(cfg.duration / dt)) + 1
    t = np.arange(n) * dt
    theta = np.empty(n)
    theta_dot = np.zeros(n)
    theta_ddot = np.zeros(n)
    for kind, t0, t1, a, b, _ in cfg.segments():
        sel = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
        if kind == "hold":
            theta[sel] = a
            theta_dot[sel] = 0.0
            theta_ddot[sel] = 0.0
        else:
            T = t1 - t0
            phase = math.pi * (t[sel] - t0) / T
            theta[sel] = a + (b - a) * (1 - np.cos(phase)) / 2
            theta_dot[sel] = (b - a) * math.pi / (2 * T) * np.sin(phase)
            theta_ddot[sel] = (b - a) * math.pi**2 / (2 * T**2) * np.cos(phase)
    return TimeSeries({"t": t, "theta_ref": theta, "theta_ref_dot": theta_dot,
                       "theta_ref_ddot": theta_ddot})


def inner_pressure_control(p_ref: float, p_ref_dot: float, x, params: PlantParams,
                           cfg: InnerLoopConfig) -> tuple[float, bool]:
    """Valve voltage that makes ``p' = p_ref_dot + kp (p_ref - p)``.

    Inverts the pressure dynamics for the required mass flow and then the
    valve law for the voltage. Returns ``(v, saturated)``.
    """
    theta, theta_dot, p = float(x[0]), float(x[1]), float(x[2])
    c, g, m, valve = params.consts, params.geom, params.mech, params.valve
    s = m.r_crank * max(theta, 0.0)
    s_dot = m.r_crank * theta_dot
    p_dot_cmd = (p_ref_dot if cfg.use_feedforward else 0.0) + cfg.kp_pressure * (p_ref - p)
    mdot = (g.volume(s) / (c.kappa * c.RT) * p_dot_cmd
            + p / c.RT * g.dvolume(s) * s_dot)
    if mdot > 0:
        flow = valve.area_gain * c.eta * c.p_supply * max(psi(p, c.p_supply, c), cfg.psi_floor)
    elif mdot < 0:
        flow = valve.area_gain * c.eta * p * max(psi(c.p_atm, p, c), cfg.psi_floor)
    else:
        return valve.v_neutral, False
    v = valve.v_neutral + mdot / flow
    v_sat = min(max(v, valve.v_min), valve.v_max)
    return v_sat, v_sat != v


class OuterController:
    """Sampled position controller producing a pressure reference.

    The linear controller output is a pressure deviation in model units,
    scaled by ``pressure_unit`` and added to ``p_op``. While the reference
    is clamped the controller state is frozen (anti-windup).
    """

    def __init__(self, controller: StateSpace, cfg: OuterLoopConfig, p_op: float,
                 p_min: float, p_max: float):
        self.cfg = cfg
        self.K: DiscreteStateSpace = lti.discretize_tustin(controller, 1.0 / cfg.rate_outer)
        self.x = np.zeros(self.K.n_states)
        self.p_op = p_op
        self.p_min = p_min if cfg.p_ref_min is None else cfg.p_ref_min
        self.p_max = p_max if cfg.p_ref_max is None else cfg.p_ref_max
        self.clamped = False

    def update(self, theta_ref: float, theta: float) -> float:
        e = theta_ref - theta
        x_next, y = self.K.step(self.x, e)
        p_ref = self.p_op + self.cfg.pressure_unit * float(y[0])
        clipped = min(max(p_ref, self.p_min), self.p_max)
        self.clamped = clipped != p_ref
        if not self.clamped:
            self.x = x_next
        return clipped


def outer_position_control(theta_ref: float, theta: float, ctrl: OuterController) -> float:
    return ctrl.update(theta_ref, theta)


class SimulationError(RuntimeError):
    pass


def simulate(plant: Plant, controller: StateSpace, trajectory: TimeSeries,
             inner: InnerLoopConfig = InnerLoopConfig(),
             outer: OuterLoopConfig = OuterLoopConfig(),
             t_end: float | None = None, x0=None) -> TimeSeries:
    """Fixed-step RK4 run of the full cascade against a reference log.

    ``trajectory`` must be sampled at the inner rate; the outer controller
    runs every ``rate_inner / rate_outer`` inner steps.
    """
    params = plant.params
    dt = 1.0 / inner.rate_inner
    ratio = inner.rate_inner / outer.rate_outer
    n_sub = int(round(ratio))
    if abs(ratio - n_sub) > 1e-9 or n_sub < 1:
        raise ValueError("outer period must be an integer multiple of the inner period")
    if abs(trajectory.dt - dt) > 1e-12:
        raise ValueError("trajectory must be sampled at the inner rate")
    n = len(trajectory.t) if t_end is None else int(round(t_end / dt)) + 1
    ref = trajectory["theta_ref"]
    x = plant.equilibrium(ref[0]) if x0 is None else np.asarray(x0, dtype=float)
    ctrl = OuterController(controller, outer, p_op=float(x[2]),
                           p_min=params.consts.p_atm, p_max=params.consts.p_supply)
    log = {k: np.zeros(n) for k in ("theta", "theta_dot", "p_ref", "p", "v")}
    flags = np.zeros(n, dtype=int)
    p_ref = float(x[2])
    for i in range(n):
        if i % n_sub == 0:
            p_ref = ctrl.update(ref[i], x[0])
        v, sat = inner_pressure_control(p_ref, 0.0, x, params, inner)
        log["theta"][i], log["theta_dot"][i], log["p"][i] = x
        log["p_ref"][i], log["v"][i] = p_ref, v
        flags[i] = (1 if sat else 0) | (2 if ctrl.clamped else 0)
        if i == n - 1:
            break
        x, hit = plant.step(x, v, dt)
        if not np.all(np.isfinite(x)):
            raise SimulationError(f"state became non-finite at t={(i + 1) * dt:.4f}")
        if hit:
            flags[i] |= 4
    cols = {"t": trajectory.t[:n], "theta_ref": ref[:n]}
    cols.update(log)
    cols["sat_flag"] = flags
    cols["theta_ref_dot"] = trajectory["theta_ref_dot"][:n]
    return TimeSeries(cols)


LOG_COLUMNS = ("t", "theta_ref", "theta", "theta_dot", "p_ref", "p", "v", "sat_flag")


def sine_sweep_inner(plant: Plant, freqs, amplitude: float = 1500.0,
                     theta0: float = 0.7, inner: InnerLoopConfig = InnerLoopConfig(),
                     cycles: int = 6) -> np.ndarray:
    """Amplitude ratio of the closed pressure loop at each frequency (Hz).

    The pendulum moves freely while the pressure reference oscillates around
    the equilibrium pressure at ``theta0``; the gain is read from a
    least-squares sinusoid fit over the last half of the run.
    """
    dt = 1.0 / inner.rate_inner
    gains = []
    for f in freqs:
        x = plant.equilibrium(theta0)
        p0 = float(x[2])
        n = int(round(cycles / f / dt))
        t = np.arange(n) * dt
        p = np.empty(n)
        w = 2 * math.pi * f
        for i in range(n):
            p[i] = x[2]
            p_ref = p0 + amplitude * math.sin(w * t[i])
            p_ref_dot = amplitude * w * math.cos(w * t[i])
            v, _ = inner_pressure_control(p_ref, p_ref_dot, x, plant.params, inner)
            x, _ = plant.step(x, v, dt)
        half = t >= t[-1] / 2
        basis = np.column_stack([np.sin(w * t[half]), np.cos(w * t[half]), np.ones(half.sum())])
        coef, *_ = np.linalg.lstsq(basis, p[half], rcond=None)
        gains.append(math.hypot(coef[0], coef[1]) / amplitude)
    return np.array(gains)


def inner_bandwidth(plant: Plant, inner: InnerLoopConfig = InnerLoopConfig(),
                    freqs=None, **kwargs) -> float:
    """-3 dB frequency (Hz) of the closed pressure loop from a sine sweep."""
    freqs = np.logspace(-0.5, 1.5, 13) if freqs is None else np.asarray(freqs, dtype=float)
    gains = sine_sweep_inner(plant, freqs, inner=inner, **kwargs)
    return lsdp.first_crossing(freqs, gains, 1 / math.sqrt(2))


def with_acceleration_outputs(g: StateSpace) -> StateSpace:
    """Append first and second output derivatives (needs relative degree >= 2)."""
    if g.n_inputs != 1 or g.n_outputs != 1:
        raise ValueError("SISO plant expected")
    if abs(g.D[0, 0]) > 0 or abs((g.C @ g.B)[0, 0]) > 1e-12 * max(1.0, np.abs(g.C).max()):
        raise ValueError("plant needs relative degree >= 2")
    C = np.vstack([g.C, g.C @ g.A, g.C @ g.A @ g.A])
    D = np.array([[0.0], [0.0], [(g.C @ g.A @ g.B)[0, 0]]])
    return StateSpace(g.A, g.B, C, D)


def closed_loop_with_acceleration(plant: StateSpace, controller: StateSpace) -> StateSpace:
    """Reference to ``(y, y', y'')`` with unity negative feedback around ``C G``."""
    P3 = with_acceleration_outputs(plant)
    P = lti.append(controller, P3)
    # inputs (e, u_p); outputs (u_c, y, y', y'')
    Q = np.array([[0.0, -1.0, 0.0, 0.0],
                  [1.0, 0.0, 0.0, 0.0]])
    Bw = np.array([[1.0], [0.0]])
    Cz = np.array([[0.0, 1.0, 0.0, 0.0],
                   [0.0, 0.0, 1.0, 0.0],
                   [0.0, 0.0, 0.0, 1.0]])
    return lti.interconnect(P, Q, Bw, Cz, np.zeros((3, 1)))


@dataclass
class StepSweepResult:
    name: str
    t: np.ndarray
    responses: np.ndarray       # (27, N) angle
    accelerations: np.ndarray   # (27, N)
    stable: np.ndarray          # (27,) bool
    final_errors: np.ndarray    # (27,)
    dc_gains: np.ndarray        # (27,)
    synthesis: lsdp.SynthesisResult

    @property
    def peak_accelerations(self) -> np.ndarray:
        return np.max(np.abs(self.accelerations), axis=1)

    @property
    def aggregate_peak_acceleration(self) -> float:
        return float(np.max(self.peak_accelerations))


def step_sweep(um: UncertainModel, weights: dict[str, lsdp.ShapingWeights],
               t_end: float = 20.0, dt: float = 1e-3,
               margin_factor: float = 1.0) -> dict[str, StepSweepResult]:
    """Unit step responses of all 27 vertex models under each synthesized controller."""
    g_nom = tf_to_ss(perturbed_tf(um))
    out = {}
    for name, w in weights.items():
        res = lsdp.synthesize(g_nom, w, margin_factor)
        C = lsdp.tracking_controller(res)
        ys, accs, stable, errs, dcs = [], [], [], [], []
        for d in vertex_perturbations():
            cl = closed_loop_with_acceleration(tf_to_ss(perturbed_tf(um, d)), C)
            stable.append(cl.is_stable())
            t, y, _ = lti.step_response(cl, t_end, dt)
            ys.append(y[:, 0])
            accs.append(y[:, 2])
            errs.append(abs(y[-1, 0] - 1.0))
            dcs.append(float(cl.dc_gain()[0, 0]))
        out[name] = StepSweepResult(name=name, t=t, responses=np.array(ys),
                                    accelerations=np.array(accs), stable=np.array(stable),
                                    final_errors=np.array(errs), dc_gains=np.array(dcs),
                                    synthesis=res)
    return out


@dataclass
class TrackingMetrics:
    plateau_relative_errors: list[float]
    max_position_error: float
    max_position_error_time: float
    max_position_error_segment: int
    max_velocity_error_accel: float
    max_velocity_error_decel: float
    peak_to_sign_change: list[float]
    envelope_decay: list[bool]

    @property
    def plateaus_within_2pct(self) -> int:
        return sum(e < 0.02 for e in self.plateau_relative_errors)

    def as_report(self) -> dict[str, object]:
        rep = {"n_plateaus": len(self.plateau_relative_errors),
               "plateaus_within_2pct": self.plateaus_within_2pct}
        for i, e in enumerate(self.plateau_relative_errors):
            rep[f"plateau_{i}_relative_error"] = e
        rep.update(max_position_error=self.max_position_error,
                   max_position_error_time=self.max_position_error_time,
                   max_position_error_segment=self.max_position_error_segment,
                   max_velocity_error_accel=self.max_velocity_error_accel,
                   max_velocity_error_decel=self.max_velocity_error_decel,
                   max_peak_to_sign_change=max(self.peak_to_sign_change, default=0.0),
                   envelope_decay_all=all(self.envelope_decay))
        return rep


def _zero_crossings(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    s = np.sign(x)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    # linear interpolation of the crossing instant
    return t[idx] - x[idx] * (t[idx + 1] - t[idx]) / (x[idx + 1] - x[idx])


def envelope_decays(err: np.ndarray, rel_slack: float = 0.05, abs_slack: float = 1e-4,
                    tail_fraction: float = 0.2, tail_ratio: float = 0.1) -> bool:
    """Error envelope over a hold never re-grows and ends well below its start.

    The envelope is sampled at the half-wave peaks of ``err`` (largest
    ``|err|`` between sign changes). No peak may exceed the largest earlier
    one, and the tail of the window must sit below ``tail_ratio`` times the
    first peak.
    """
    sign = np.sign(err)
    cuts = np.nonzero(sign[:-1] * sign[1:] < 0)[0] + 1
    peaks = [float(np.max(np.abs(chunk))) for chunk in np.split(err, cuts) if chunk.size]
    running = np.maximum.accumulate(peaks)
    no_regrowth = all(b <= a * (1 + rel_slack) + abs_slack for a, b in zip(running, peaks[1:]))
    tail = np.abs(err[int(len(err) * (1 - tail_fraction)):])
    return no_regrowth and float(np.max(tail)) <= tail_ratio * peaks[0] + abs_slack


def compute_metrics(log: TimeSeries, cfg: ReferenceTrajectory,
                    settle_fraction: float = 0.2) -> TrackingMetrics:
    t = log.t
    e = log["theta"] - log["theta_ref"]
    ev = log["theta_dot"] - log["theta_ref_dot"]
    rel, near, decay = [], [], []
    acc_mask = np.zeros(len(t), dtype=bool)
    moving = np.zeros(len(t), dtype=int) - 1
    segs = list(cfg.segments())
    for kind, t0, t1, a, b, idx in segs:
        sel = (t >= t0) & (t < t1)
        if kind == "hold":
            tail = sel & (t >= t1 - settle_fraction * (t1 - t0))
            if tail.any():
                rel.append(float(np.max(np.abs(e[tail])) / abs(b)))
            if idx > 0:
                decay.append(envelope_decays(e[sel]))
        else:
            acc_mask |= sel & (t < 0.5 * (t0 + t1))
        if idx > 0:
            moving[sel] = idx
    crossings = _zero_crossings(t, ev)
    for idx in range(1, len(cfg.plateaus)):
        sel = moving == idx
        if not sel.any():
            continue
        i_peak = np.nonzero(sel)[0][np.argmax(np.abs(e[sel]))]
        t_peak = t[i_peak]
        near.append(float(np.min(np.abs(crossings - t_peak))) if crossings.size else math.inf)
    i_max = int(np.argmax(np.abs(e)))
    decel_mask = ~acc_mask & (moving > 0)
    return TrackingMetrics(
        plateau_relative_errors=rel,
        max_position_error=float(e[i_max]),
        max_position_error_time=float(t[i_max]),
        max_position_error_segment=int(moving[i_max]),
        max_velocity_error_accel=float(np.max(np.abs(ev[acc_mask]))) if acc_mask.any() else 0.0,
        max_velocity_error_decel=float(np.max(np.abs(ev[decel_mask]))) if decel_mask.any() else 0.0,
        peak_to_sign_change=near,
        envelope_decay=decay,
    )
