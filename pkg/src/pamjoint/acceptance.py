"""Acceptance checks shared by the ``verify`` command and the test suite.

Each check returns a :class:`Outcome` with the measured quantity and a
pass flag evaluated at a fixed tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import cascade, identification, lsdp, lti, plant as pl
from .uncertainty import (PAPER_MODEL, Perturbation, UncertainModel, close_uncertainty,
                          lft_realization, perturbed_tf, tf_to_ss)


@dataclass(frozen=True)
class Outcome:
    key: str
    description: str
    passed: bool
    measured: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.key}: {self.description} | {self.measured}"


W13 = lsdp.W1_CANDIDATES["w13"]


def _paper_design(um: UncertainModel = PAPER_MODEL, w: lsdp.ShapingWeights = W13):
    g = tf_to_ss(perturbed_tf(um))
    return g, lsdp.synthesize(g, w)


def gamma_reproduction() -> Outcome:
    _, res = _paper_design()
    inv = res.epsilon
    return Outcome("1", "1/gamma = 0.7154 +- 0.03 (nominal model, W13)",
                   abs(inv - 0.7154) <= 0.03, f"1/gamma = {inv:.4f}")


def closed_loop_bandwidth() -> Outcome:
    g, res = _paper_design()
    bw = lsdp.sigma_report(res, g).bandwidth
    return Outcome("2", "closed-loop bandwidth = 1.2 rad/s +- 25%",
                   abs(bw - 1.2) <= 0.25 * 1.2, f"bandwidth = {bw:.4f} rad/s")


def criterion_self_consistency() -> Outcome:
    _, res = _paper_design()
    crit = lsdp.robust_criterion_norm(res)
    rel = abs(crit.norm - res.gamma) / res.gamma
    return Outcome("3a", "robust-stability criterion norm equals gamma within 0.5%",
                   rel <= 0.005, f"norm = {crit.norm:.6f}, gamma = {res.gamma:.6f}, rel = {rel:.2e}")


def sensitivity_above_crossover() -> Outcome:
    g, res = _paper_design()
    rep = lsdp.sigma_report(res, g)
    sel = rep.omega > rep.loop_crossover
    peak = float(np.max(np.abs(rep.S[sel])))
    w_peak = float(rep.omega[sel][np.argmax(np.abs(rep.S[sel]))])
    return Outcome("3b", "sigma(S) < 1 at every grid frequency above loop crossover",
                   peak < 1.0, f"max |S| = {peak:.4f} at {w_peak:.3g} rad/s "
                   f"(crossover {rep.loop_crossover:.4f} rad/s)")


def complementary_below_crossover() -> Outcome:
    g, res = _paper_design()
    rep = lsdp.sigma_report(res, g)
    sel = rep.omega < rep.loop_crossover
    peak = float(np.max(np.abs(rep.T[sel])))
    return Outcome("3c", "sigma(T) < 1 at every grid frequency below loop crossover",
                   peak < 1.0, f"max |T| = {peak:.6f}")


def _sweep(t_end: float = 20.0, dt: float = 1e-3):
    return cascade.step_sweep(PAPER_MODEL, lsdp.W1_CANDIDATES, t_end=t_end, dt=dt)


def vertex_stability(sweep=None) -> Outcome:
    sweep = sweep or _sweep()
    st = sweep["w13"].stable
    return Outcome("4a", "all 27 vertex closed loops with K3 stable",
                   bool(np.all(st)), f"{int(np.sum(st))}/27 stable")


def vertex_steady_state(sweep=None) -> Outcome:
    sweep = sweep or _sweep()
    worst = {k: float(np.max(v.final_errors)) for k, v in sweep.items()}
    return Outcome("4b", "steady-state step error < 0.5% for K1, K2, K3 on all vertices",
                   max(worst.values()) < 0.005,
                   ", ".join(f"{k} {e:.2e}" for k, e in worst.items()))


def vertex_acceleration(sweep=None) -> Outcome:
    sweep = sweep or _sweep()
    acc = {k: v.aggregate_peak_acceleration for k, v in sweep.items()}
    return Outcome("4c", "K3 has the smallest aggregate peak angular acceleration",
                   min(acc, key=acc.get) == "w13",
                   ", ".join(f"{k} {a:.1f}" for k, a in acc.items()))


def tracking_run():
    g, res = _paper_design()
    traj_cfg = cascade.ReferenceTrajectory()
    inner = cascade.InnerLoopConfig()
    traj = cascade.make_trajectory(traj_cfg, 1.0 / inner.rate_inner)
    log = cascade.simulate(pl.Plant(), lsdp.tracking_controller(res), traj, inner)
    return log, cascade.compute_metrics(log, traj_cfg)


def tracking_plateaus(metrics=None) -> Outcome:
    metrics = metrics or tracking_run()[1]
    n, tot = metrics.plateaus_within_2pct, len(metrics.plateau_relative_errors)
    return Outcome("5a", "steady-state relative error < 2% on >= 9 of 10 plateaus",
                   n >= 9, f"{n}/{tot}, worst {max(metrics.plateau_relative_errors):.4f}")


def tracking_peak_timing(metrics=None) -> Outcome:
    metrics = metrics or tracking_run()[1]
    worst = max(metrics.peak_to_sign_change)
    return Outcome("5b", "peak position errors within 0.2 s of a velocity-error sign change",
                   worst <= 0.2, f"max distance {worst:.4f} s")


def tracking_envelope(metrics=None) -> Outcome:
    metrics = metrics or tracking_run()[1]
    ok = metrics.envelope_decay
    return Outcome("5c", "post-transient error envelope decays on every hold",
                   all(ok), f"{sum(ok)}/{len(ok)} holds")


def care_random(n_cases: int = 100, seed: int = 0) -> Outcome:
    rng = np.random.default_rng(seed)
    worst, unstable = 0.0, 0
    for _ in range(n_cases):
        n = int(rng.integers(1, 9))
        m = int(rng.integers(1, 4))
        A = rng.standard_normal((n, n))
        B = rng.standard_normal((n, m))
        Mq = rng.standard_normal((n, n))
        Q = Mq @ Mq.T + 1e-3 * np.eye(n)
        Mr = rng.standard_normal((m, m))
        R = Mr @ Mr.T + np.eye(m)
        X = lti.care_solve(A, B, Q, R)
        worst = max(worst, lti.care_residual(A, B, Q, R, X) / (1 + np.linalg.norm(X)))
        Acl = A - B @ np.linalg.solve(R, B.T @ X)
        unstable += int(np.max(np.linalg.eigvals(Acl).real) >= 0)
    return Outcome("6a", "CARE residual <= 1e-8 (1 + |X|) and stabilizing, 100 random cases",
                   worst <= 1e-8 and unstable == 0,
                   f"worst scaled residual {worst:.2e}, {unstable} non-stabilizing")


def hinf_vs_grid(n_cases: int = 50, seed: int = 1) -> Outcome:
    rng = np.random.default_rng(seed)
    grid = np.logspace(-3, 3, 20000)
    worst = 0.0
    for _ in range(n_cases):
        g = lti.random_stable(int(rng.integers(1, 7)), int(rng.integers(1, 3)),
                              int(rng.integers(1, 3)), rng)
        h = lti.hinf_norm(g)
        dense = float(max(np.max(lti.sigma_max(lti.freq_response(g, grid))),
                          np.linalg.norm(g.D, 2)))
        worst = max(worst, abs(h - dense) / dense)
    return Outcome("6b", "H-infinity bisection matches dense grid maximum within 1%",
                   worst <= 0.01, f"worst relative gap {worst:.2e}")


def lft_vs_direct(n_cases: int = 100, seed: int = 2) -> Outcome:
    rng = np.random.default_rng(seed)
    P = lft_realization(PAPER_MODEL)
    omega = np.logspace(-2, 3, 200)
    worst = 0.0
    for _ in range(n_cases):
        d = Perturbation(*rng.uniform(-1, 1, 3))
        a = lti.freq_response(close_uncertainty(P, d), omega).siso()
        b = lti.freq_response(tf_to_ss(perturbed_tf(PAPER_MODEL, d)), omega).siso()
        worst = max(worst, float(np.max(np.abs(a - b) / np.abs(b))))
    return Outcome("6c", "LFT closure equals direct perturbation within 1e-8, 100 random deltas",
                   worst <= 1e-8, f"worst relative deviation {worst:.2e}")


def _free_run(plant: pl.Plant, x0, t_end: float, dt: float, v: float = 5.0) -> np.ndarray:
    x = np.asarray(x0, dtype=float)
    f = lambda y: plant.rhs(y, v)
    for _ in range(int(round(t_end / dt))):
        x = pl.rk4_step(f, x, dt)
    return x


def rk4_order(h: float = 0.01, t_end: float = 1.0) -> Outcome:
    plant = pl.Plant()
    x0 = plant.equilibrium(0.7)
    x0[2] += 3000.0
    # stays clear of the force-law kink at maximum contraction, so RK4 keeps full order
    ref = _free_run(plant, x0, t_end, h / 64)
    e1 = abs(_free_run(plant, x0, t_end, h)[0] - ref[0])
    e2 = abs(_free_run(plant, x0, t_end, h / 2)[0] - ref[0])
    ratio = e1 / e2
    return Outcome("6d", "RK4 step-halving error ratio in [12, 20]",
                   12 <= ratio <= 20, f"ratio {ratio:.3f}")


def adiabatic_drift(t_end: float = 10.0, dt: float = 1e-3) -> Outcome:
    plant = pl.Plant()
    prm = plant.params
    x = plant.equilibrium(0.6)
    x[2] += 4000.0
    inv = lambda y: y[2] * prm.geom.volume(prm.mech.r_crank * y[0]) ** prm.consts.kappa
    c0 = inv(x)
    worst = 0.0
    for _ in range(int(round(t_end / dt))):
        x, hit = plant.step(x, prm.valve.v_neutral, dt)
        if hit:
            raise RuntimeError("closed-valve run touched a hard stop")
        worst = max(worst, abs(inv(x) / c0 - 1))
    return Outcome("7a", "closed-valve p V^kappa drift < 0.1% over 10 s",
                   worst < 1e-3, f"max drift {worst:.2e}")


def psi_shape() -> Outcome:
    from scipy.optimize import minimize_scalar

    c = pl.PneumaticConstants()
    at_one = pl.psi(1e5, 1e5, c)
    opt = minimize_scalar(lambda r: -pl._psi_subsonic(r, c), bounds=(0.05, 0.99),
                          method="bounded", options={"xatol": 1e-10})
    r_max = float(opt.x)
    plateau = abs(pl.psi(0.3e5, 1e5, c) - pl.psi(r_max * 1e5, 1e5, c))
    ok = at_one == 0.0 and abs(r_max - 0.5283) <= 1e-4 and plateau < 1e-9
    return Outcome("7b", "psi(1) = 0 and psi maximal at ratio 0.5283 +- 1e-4 (kappa 1.4)",
                   ok, f"psi(1) = {at_one}, argmax {r_max:.6f}")


def identification_round_trip(seed: int = 3) -> Outcome:
    truth = identification.SecondOrderModel(0.0025, 0.0445, 2.5638)
    dt = 2e-3
    t = np.arange(5000) * dt
    rng = np.random.default_rng(seed)
    p = sum(np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
            for f in (0.3, 0.7, 1.3, 2.1, 3.4, 5.5))
    fit = identification.fit_second_order(p, identification.simulate_model(truth, p, dt), dt)
    errs = [abs(getattr(fit, k) / getattr(truth, k) - 1) for k in "jck"]
    return Outcome("7c", "identification round trip recovers (j, c, k) within 1% at zero noise",
                   max(errs) < 0.01, "rel errors " + ", ".join(f"{e:.2e}" for e in errs))


def inner_loop_bandwidth() -> Outcome:
    bw = cascade.inner_bandwidth(pl.Plant())
    return Outcome("8", "inner pressure loop -3 dB bandwidth >= 3 Hz",
                   bw >= 3.0, f"bandwidth {bw:.3f} Hz")


def run_all(progress: Callable[[Outcome], None] | None = None) -> list[Outcome]:
    sweep = _sweep()
    _, metrics = tracking_run()
    checks = [gamma_reproduction, closed_loop_bandwidth, criterion_self_consistency,
              sensitivity_above_crossover, complementary_below_crossover,
              lambda: vertex_stability(sweep), lambda: vertex_steady_state(sweep),
              lambda: vertex_acceleration(sweep), lambda: tracking_plateaus(metrics),
              lambda: tracking_peak_timing(metrics), lambda: tracking_envelope(metrics),
              care_random, hinf_vs_grid, lft_vs_direct, rk4_order, adiabatic_drift,
              psi_shape, identification_round_trip, inner_loop_bandwidth]
    out = []
    for check in checks:
        res = check()
        out.append(res)
        if progress:
            progress(res)
    return out
