"""Second-order pressure-to-angle model with bounded parametric perturbations.

The perturbed model is ``1 / (j s^2 + c s + k)`` with each coefficient
``z = z_m (1 + p_z delta_z)``, ``|delta_z| <= 1``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .lti import StateSpace, TransferFunction, interconnect, tf_to_ss


@dataclass(frozen=True)
class UncertainModel:
    j_m: float
    c_m: float
    k_m: float
    p_j: float = 0.0
    p_c: float = 0.0
    p_k: float = 0.0

    def __post_init__(self):
        if min(self.j_m, self.c_m, self.k_m) <= 0:
            raise ValueError("nominal coefficients must be positive")
        for name in ("p_j", "p_c", "p_k"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in [0, 1)")


# The aggregate row printed alongside the ten identified submodels.
PAPER_MODEL = UncertainModel(j_m=0.0025, c_m=0.0445, k_m=2.5638,
                             p_j=0.2535, p_c=0.2382, p_k=0.4599)


@dataclass(frozen=True)
class Perturbation:
    delta_j: float = 0.0
    delta_c: float = 0.0
    delta_k: float = 0.0

    def __post_init__(self):
        if max(abs(self.delta_j), abs(self.delta_c), abs(self.delta_k)) > 1:
            raise ValueError(f"perturbation outside the unit box: {self}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.delta_j, self.delta_c, self.delta_k)


def nominal_tf(um: UncertainModel) -> TransferFunction:
    return TransferFunction([1.0], [um.j_m, um.c_m, um.k_m])


def perturbed_tf(um: UncertainModel, d: Perturbation = Perturbation()) -> TransferFunction:
    return TransferFunction([1.0], [um.j_m * (1 + um.p_j * d.delta_j),
                                    um.c_m * (1 + um.p_c * d.delta_c),
                                    um.k_m * (1 + um.p_k * d.delta_k)])


def lft_realization(um: UncertainModel) -> StateSpace:
    """Core system with inputs ``(u_j, u_c, u_k, u)`` and outputs ``(y_j, y_c, y_k, y)``.

    States are ``(theta, theta_dot)``. Closing ``u_* = delta_* y_*`` gives the
    perturbed model.
    """
    j, c, k = um.j_m, um.c_m, um.k_m
    A = np.array([[0.0, 1.0],
                  [-k / j, -c / j]])
    B = np.array([[0.0, 0.0, 0.0, 0.0],
                  [-um.p_j, -um.p_c / j, -um.p_k / j, 1.0 / j]])
    C = np.array([[-k / j, -c / j],
                  [0.0, c],
                  [k, 0.0],
                  [1.0, 0.0]])
    D = np.array([[-um.p_j, -um.p_c / j, -um.p_k / j, 1.0 / j],
                  [0.0, 0.0, 0.0, 0.0],
                  [0.0, 0.0, 0.0, 0.0],
                  [0.0, 0.0, 0.0, 0.0]])
    return StateSpace(A, B, C, D)


def close_uncertainty(P: StateSpace, d: Perturbation) -> StateSpace:
    """Upper LFT: wire ``diag(delta)`` from the first three outputs to the first three inputs."""
    Q = np.zeros((4, 4))
    Q[:3, :3] = np.diag(d.as_tuple())
    Bw = np.array([[0.0], [0.0], [0.0], [1.0]])
    Cz = np.array([[0.0, 0.0, 0.0, 1.0]])
    return interconnect(P, Q, Bw, Cz, np.zeros((1, 1)))


VERTEX_LEVELS = (-1.0, 0.0, 1.0)


def vertex_perturbations() -> list[Perturbation]:
    """All of ``{-1, 0, 1}^3`` ordered lexicographically in ``(delta_j, delta_c, delta_k)``."""
    return [Perturbation(*d) for d in itertools.product(VERTEX_LEVELS, repeat=3)]


def vertex_models(um: UncertainModel) -> list[StateSpace]:
    return [tf_to_ss(perturbed_tf(um, d)) for d in vertex_perturbations()]
