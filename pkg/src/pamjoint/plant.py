"""Nonlinear model of a pendulum joint lifted by a single pneumatic muscle.

State is ``(theta, theta_dot, p)``: pendulum angle from horizontal, its rate,
and absolute muscle pressure. Pressure follows the polytropic filling law
driven by a proportional valve; the muscle force comes from a braided
cylinder model and acts on the pendulum through a constant moment arm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

G_ACC = 9.81


@dataclass(frozen=True)
class PneumaticConstants:
    T: float = 293.0
    R: float = 287.1
    kappa: float = 1.4
    eta: float = 0.14
    p_supply: float = 6.0e5
    p_atm: float = 101325.0

    def __post_init__(self):
        if not (self.T > 0 and self.R > 0 and self.kappa > 1):
            raise ValueError("need T > 0, R > 0, kappa > 1")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if not self.p_supply > self.p_atm > 0:
            raise ValueError("need p_supply > p_atm > 0")

    @property
    def RT(self) -> float:
        return self.R * self.T


@dataclass(frozen=True)
class PamGeometry:
    """Braided-sleeve muscle (rest length, rest radius, braid angle, dead volume).

    Also serves as the muscle model: anything with ``volume``, ``dvolume``,
    ``force`` and ``max_contraction`` can stand in for it.
    """

    L0: float = 0.200
    r0: float = 0.010
    alpha0: float = math.radians(23.0)
    V_dead: float = 5.0e-6

    def __post_init__(self):
        if not (self.L0 > 0 and self.r0 > 0 and 0 < self.alpha0 < math.pi / 2
                and self.V_dead >= 0):
            raise ValueError(f"invalid muscle geometry {self}")

    @property
    def a(self) -> float:
        return 3.0 / math.tan(self.alpha0) ** 2

    @property
    def b(self) -> float:
        return 1.0 / math.sin(self.alpha0) ** 2

    @property
    def s_max(self) -> float:
        # braid angle reaches 90 deg at full collapse of the length
        return self.L0

    @property
    def max_contraction(self) -> float:
        """Contraction where the force vanishes, i.e. ``a (1 - eps)^2 = b``."""
        return self.L0 * (1.0 - math.sqrt(self.b / self.a))

    def _check(self, s):
        if not 0.0 <= s < self.s_max:
            raise ValueError(f"contraction {s} outside [0, {self.s_max})")

    def volume(self, s: float) -> float:
        self._check(s)
        c2 = math.cos(self.alpha0) ** 2
        r2 = self.r0**2 * (1.0 - c2 * (1.0 - s / self.L0) ** 2) / math.sin(self.alpha0) ** 2
        return self.V_dead + math.pi * r2 * (self.L0 - s)

    def dvolume(self, s: float) -> float:
        self._check(s)
        e = s / self.L0
        return math.pi * self.r0**2 * (self.a * (1.0 - e) ** 2 - self.b)

    def force(self, p: float, s: float, p_atm: float) -> float:
        e = s / self.L0
        f = (p - p_atm) * math.pi * self.r0**2 * (self.a * (1.0 - e) ** 2 - self.b)
        return max(f, 0.0)


@dataclass(frozen=True)
class ValveModel:
    """Closed-centre proportional valve; opening proportional to ``v - v_neutral``.

    ``area_gain`` (m^2/V) turns the volt-scaled flow law into kg/s; the
    default gives roughly 7 g/s at full opening against a 6 bar supply.
    """

    v_min: float = 0.0
    v_neutral: float = 5.0
    v_max: float = 10.0
    area_gain: float = 7.0e-6

    def __post_init__(self):
        if not self.v_min < self.v_neutral < self.v_max:
            raise ValueError("need v_min < v_neutral < v_max")
        if self.area_gain <= 0:
            raise ValueError("area_gain must be positive")


@dataclass(frozen=True)
class MechanicalParams:
    l: float = 0.250
    m: float = 0.471
    r_crank: float = 0.0478
    c_visc: float = 0.05
    theta_min: float = 0.0
    theta_max: float = math.pi / 2

    def __post_init__(self):
        if not (self.l > 0 and self.m > 0 and self.r_crank > 0 and self.c_visc >= 0):
            raise ValueError(f"invalid mechanical parameters {self}")
        if not 0 <= self.theta_min < self.theta_max <= math.pi / 2:
            raise ValueError("workspace must lie within [0, pi/2]")

    @property
    def inertia(self) -> float:
        return self.m * self.l**2 / 3.0

    @property
    def gravity_torque(self) -> float:
        return self.m * G_ACC * self.l / 2.0


@dataclass(frozen=True)
class PlantParams:
    consts: PneumaticConstants = field(default_factory=PneumaticConstants)
    geom: PamGeometry = field(default_factory=PamGeometry)
    valve: ValveModel = field(default_factory=ValveModel)
    mech: MechanicalParams = field(default_factory=MechanicalParams)


@dataclass(frozen=True)
class PlantState:
    theta: float
    theta_dot: float
    p: float

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.theta_dot, self.p])


def critical_ratio(kappa: float) -> float:
    return (2.0 / (kappa + 1.0)) ** (kappa / (kappa - 1.0))


def _psi_subsonic(r: float, consts: PneumaticConstants) -> float:
    k = consts.kappa
    bracket = r ** (2.0 / k) - r ** ((k + 1.0) / k)
    return math.sqrt(2.0 * k / (consts.RT * (k - 1.0)) * max(bracket, 0.0))


def psi(p_down: float, p_up: float, consts: PneumaticConstants) -> float:
    """Orifice flow function; clamped at the critical ratio (choked flow)."""
    if p_down <= 0 or p_up <= 0:
        raise ValueError("pressures must be positive")
    r = min(p_down / p_up, 1.0)
    return _psi_subsonic(max(r, critical_ratio(consts.kappa)), consts)


def mass_flow(v: float, p: float, consts: PneumaticConstants, valve: ValveModel) -> float:
    """Mass flow into the muscle (kg/s); negative when venting."""
    if not valve.v_min <= v <= valve.v_max:
        raise ValueError(f"valve voltage {v} outside [{valve.v_min}, {valve.v_max}]")
    u = v - valve.v_neutral
    if u > 0:
        return u * valve.area_gain * consts.eta * consts.p_supply * psi(p, consts.p_supply, consts)
    if u < 0:
        return u * valve.area_gain * consts.eta * p * psi(consts.p_atm, p, consts)
    return 0.0


def pam_volume(s: float, geom: PamGeometry) -> float:
    return geom.volume(s)


def pam_volume_derivative(s: float, geom: PamGeometry) -> float:
    return geom.dvolume(s)


def pam_force(p: float, s: float, geom: PamGeometry, p_atm: float = 101325.0) -> float:
    return geom.force(p, s, p_atm)


def gas_mass(p: float, V: float, consts: PneumaticConstants) -> float:
    return p * V / consts.RT


def pressure_derivative(p: float, s: float, s_dot: float, mdot: float,
                        consts: PneumaticConstants, geom: PamGeometry) -> float:
    V = geom.volume(s)
    return consts.kappa / V * (consts.RT * mdot - p * geom.dvolume(s) * s_dot)


def joint_dynamics(theta: float, theta_dot: float, F: float, mech: MechanicalParams) -> float:
    torque = (F * mech.r_crank - mech.gravity_torque * math.cos(theta)
              - mech.c_visc * theta_dot)
    return torque / mech.inertia


def plant_rhs(x, v: float, params: PlantParams) -> np.ndarray:
    """Time derivative of ``(theta, theta_dot, p)`` for valve voltage ``v``."""
    theta, theta_dot, p = float(x[0]), float(x[1]), float(x[2])
    c, g, m = params.consts, params.geom, params.mech
    s = m.r_crank * max(theta, 0.0)
    s_dot = m.r_crank * theta_dot
    F = g.force(p, s, c.p_atm)
    mdot = mass_flow(v, p, c, params.valve)
    return np.array([theta_dot,
                     joint_dynamics(theta, theta_dot, F, m),
                     pressure_derivative(p, s, s_dot, mdot, c, g)])


def rk4_step(f, x: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def clamp_state(x: np.ndarray, params: PlantParams) -> tuple[np.ndarray, bool]:
    """Hard stops at the workspace limits and the physical pressure range."""
    m, c = params.mech, params.consts
    x = np.array(x, dtype=float)
    hit = False
    if x[0] < m.theta_min:
        x[0], x[1], hit = m.theta_min, max(x[1], 0.0), True
    elif x[0] > m.theta_max:
        x[0], x[1], hit = m.theta_max, min(x[1], 0.0), True
    if x[2] < c.p_atm:
        x[2], hit = c.p_atm, True
    elif x[2] > c.p_supply:
        x[2], hit = c.p_supply, True
    return x, hit


def equilibrium_pressure(theta: float, params: PlantParams) -> float:
    """Absolute pressure that holds the pendulum still at ``theta``."""
    m, g, c = params.mech, params.geom, params.consts
    s = m.r_crank * theta
    unit_force = g.force(c.p_atm + 1.0, s, c.p_atm)
    if unit_force <= 0:
        raise ValueError(f"muscle cannot hold theta={theta}: beyond maximum contraction")
    return c.p_atm + m.gravity_torque * math.cos(theta) / (m.r_crank * unit_force)


def equilibrium_angle(p: float, params: PlantParams, tol: float = 1e-12) -> float:
    """Inverse of :func:`equilibrium_pressure` by bisection on the workspace."""
    m, g = params.mech, params.geom
    hi = min(m.theta_max, g.max_contraction / m.r_crank) - 1e-9
    lo = m.theta_min
    if p <= equilibrium_pressure(lo, params):
        return lo
    if p >= equilibrium_pressure(hi, params):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if equilibrium_pressure(mid, params) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def total_energy(x, params: PlantParams) -> float:
    """Mechanical energy plus polytropic gas energy plus atmospheric work term."""
    theta, theta_dot, p = x
    m, g, c = params.mech, params.geom, params.consts
    V = g.volume(m.r_crank * theta)
    kinetic = 0.5 * m.inertia * theta_dot**2
    potential = m.gravity_torque * math.sin(theta)
    return kinetic + potential + p * V / (c.kappa - 1.0) + c.p_atm * V


@dataclass(frozen=True)
class Plant:
    """Immutable bundle of plant parameters with convenience methods."""

    params: PlantParams = field(default_factory=PlantParams)

    def rhs(self, x, v: float) -> np.ndarray:
        return plant_rhs(x, v, self.params)

    def step(self, x, v: float, dt: float) -> tuple[np.ndarray, bool]:
        v = min(max(v, self.params.valve.v_min), self.params.valve.v_max)
        x_next = rk4_step(lambda y: plant_rhs(y, v, self.params), np.asarray(x, float), dt)
        return clamp_state(x_next, self.params)

    def equilibrium(self, theta: float) -> np.ndarray:
        return np.array([theta, 0.0, equilibrium_pressure(theta, self.params)])
