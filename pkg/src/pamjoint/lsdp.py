"""Loop-shaping design: weight the plant, robustly stabilize the normalized
coprime factors of the shaped plant, and analyse the resulting loop.

Sign convention: ``K_inf`` and ``K_final`` are positive-feedback controllers
(``u = K y``). :func:`tracking_controller` returns the equivalent
negative-feedback controller that acts on ``e = r - y``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lti
from .lti import StateSpace, TransferFunction


@dataclass(frozen=True)
class ShapingWeights:
    """Pre-compensator ``W1 = ((1/M) s + w0) / (s + A)`` and scalar post-compensator."""

    M: float
    w0: float
    A: float = 0.0
    W2: float = 1.0

    def __post_init__(self):
        if not (self.M > 0 and self.w0 > 0 and self.A >= 0):
            raise ValueError(f"invalid weights {self}")
        if self.W2 == 0:
            raise ValueError("W2 must be nonzero")


W1_CANDIDATES = {
    "w11": ShapingWeights(M=0.4, w0=3.0, A=0.0),
    "w12": ShapingWeights(M=1.0, w0=3.0, A=0.0),
    "w13": ShapingWeights(M=8.0, w0=3.0, A=0.0),
}


@dataclass(frozen=True)
class SynthesisResult:
    weights: ShapingWeights
    shaped_plant: StateSpace
    K_inf: StateSpace
    K_final: StateSpace
    gamma: float
    gamma_min: float
    X: np.ndarray
    Z: np.ndarray

    @property
    def epsilon(self) -> float:
        return 1.0 / self.gamma


def make_w1(M: float, w0: float, A: float = 0.0) -> TransferFunction:
    return TransferFunction([1.0 / M, w0], [1.0, A])


def shape_plant(g_nom, w: ShapingWeights) -> StateSpace:
    g_nom = lti.as_ss(g_nom)
    if (g_nom.n_inputs, g_nom.n_outputs) != (1, 1):
        raise ValueError("loop shaping here is SISO only")
    return lti.series(lti.tf_to_ss(make_w1(w.M, w.w0, w.A)), g_nom).scaled(w.W2)


def ncf_riccati(g: StateSpace):
    """Control and filter Riccati solutions for the normalized coprime factors."""
    A, B, C, D = g.A, g.B, g.C, g.D
    S = np.eye(g.n_inputs) + D.T @ D
    R = np.eye(g.n_outputs) + D @ D.T
    Si = np.linalg.inv(S)
    Ar = A - B @ Si @ D.T @ C
    X = lti.care_solve(Ar, B, C.T @ np.linalg.solve(R, C), S)
    Z = lti.care_solve(Ar.T, C.T, B @ Si @ B.T, R)
    return X, Z


def gamma_min(X: np.ndarray, Z: np.ndarray) -> float:
    if X.size == 0:
        return 1.0
    lam = np.max(np.linalg.eigvals(X @ Z).real)
    return float(np.sqrt(1.0 + max(lam, 0.0)))


def _reduce_descriptor(E, A, B, C, D, rtol=1e-8) -> StateSpace:
    """Convert ``E x' = A x + B y, u = C x + D y`` with possibly singular E."""
    U, s, Vt = np.linalg.svd(E)
    r = int(np.sum(s > rtol * s[0])) if s.size else 0
    At = U.T @ A @ Vt.T
    Bt = U.T @ B
    Ct = C @ Vt.T
    if r == E.shape[0]:
        Si = np.diag(1.0 / s)
        return StateSpace(Si @ At, Si @ Bt, Ct, D)
    A11, A12, A21, A22 = At[:r, :r], At[:r, r:], At[r:, :r], At[r:, r:]
    B1, B2 = Bt[:r], Bt[r:]
    C1, C2 = Ct[:, :r], Ct[:, r:]
    A22i = np.linalg.inv(A22)
    Si = np.diag(1.0 / s[:r])
    return StateSpace(Si @ (A11 - A12 @ A22i @ A21),
                      Si @ (B1 - A12 @ A22i @ B2),
                      C1 - C2 @ A22i @ A21,
                      D - C2 @ A22i @ B2)


def central_controller(g: StateSpace, X, Z, gamma: float) -> StateSpace:
    """Central robust-stabilizing controller at level ``gamma`` (positive feedback).

    Written in descriptor form so that ``gamma = gamma_min`` (where
    ``(1 - gamma^2) I + X Z`` becomes singular) yields the optimal
    reduced-order controller.
    """
    A, B, C, D = g.A, g.B, g.C, g.D
    if g.n_states == 0:
        return StateSpace.gain(-D.T)
    n = g.n_states
    S = np.eye(g.n_inputs) + D.T @ D
    F = -np.linalg.solve(S, D.T @ C + B.T @ X)
    Lt = ((1.0 - gamma**2) * np.eye(n) + X @ Z).T
    Ad = Lt @ (A + B @ F) + gamma**2 * Z @ C.T @ (C + D @ F)
    Bd = gamma**2 * Z @ C.T
    return _reduce_descriptor(Lt, Ad, Bd, B.T @ X, -D.T)


def ncf_synthesize(g_s, margin_factor: float = 1.0,
                   weights: ShapingWeights | None = None) -> SynthesisResult:
    """Robustly stabilize the shaped plant ``g_s``.

    ``gamma = margin_factor * gamma_min``; the default 1.0 gives the optimal
    controller. ``K_final = W1 K_inf W2`` when weights are given.
    """
    if margin_factor < 1.0:
        raise ValueError("margin_factor must be >= 1")
    g_s = lti.as_ss(g_s)
    X, Z = ncf_riccati(g_s)
    gmin = gamma_min(X, Z)
    if not np.isfinite(gmin):
        raise ValueError("gamma_min is unbounded")
    gamma = margin_factor * gmin
    K = central_controller(g_s, X, Z, gamma)
    if weights is None:
        K_final = K
        weights = ShapingWeights(M=1.0, w0=1.0, A=1.0)
    else:
        K_final = lti.series(K.scaled(weights.W2),
                             lti.tf_to_ss(make_w1(weights.M, weights.w0, weights.A)))
    return SynthesisResult(weights=weights, shaped_plant=g_s, K_inf=K, K_final=K_final,
                           gamma=gamma, gamma_min=gmin, X=X, Z=Z)


def synthesize(g_nom, w: ShapingWeights, margin_factor: float = 1.0) -> SynthesisResult:
    """Shape ``g_nom`` with ``w`` and synthesize; the one-call entry point."""
    return ncf_synthesize(shape_plant(g_nom, w), margin_factor, weights=w)


def tracking_controller(res: SynthesisResult) -> StateSpace:
    """Negative-feedback controller ``C = -K_final`` acting on ``r - y``."""
    return -res.K_final


def criterion_block(g_s: StateSpace, K: StateSpace) -> StateSpace:
    """``[I; K] (I - G K)^-1 [I, G]`` as a 2x2 system from ``(w1, w2)`` to ``(y, u)``.

    Built as ``y = G (u + w2) + w1``, ``u = K y``.
    """
    P = lti.append(g_s, K)
    Q = np.array([[0.0, 1.0],
                  [1.0, 0.0]])
    Bw = np.array([[0.0, 1.0],
                   [1.0, 0.0]])
    Cz = np.eye(2)
    Dzw = np.array([[1.0, 0.0],
                    [0.0, 0.0]])
    return lti.interconnect(P, Q, Bw, Cz, Dzw)


@dataclass(frozen=True)
class CriterionResult:
    norm: float
    eps_required: float

    @property
    def epsilon(self) -> float:
        return 1.0 / self.norm

    @property
    def passed(self) -> bool:
        return self.epsilon >= self.eps_required


def robust_criterion_norm(res: SynthesisResult, eps_required: float = 0.25,
                          tol: float = 1e-6) -> CriterionResult:
    H = criterion_block(res.shaped_plant, res.K_inf)
    if not H.is_stable():
        raise ValueError("closed loop is not internally stable")
    return CriterionResult(norm=lti.hinf_norm(H, tol=tol), eps_required=eps_required)


@dataclass(frozen=True)
class SigmaReport:
    omega: np.ndarray
    S: np.ndarray
    T: np.ndarray
    KS: np.ndarray
    SG: np.ndarray
    loop: np.ndarray
    shaped: np.ndarray
    bandwidth: float
    loop_crossover: float
    shaped_crossover: float

    def curves(self) -> dict[str, np.ndarray]:
        return {"omega": self.omega, "S": np.abs(self.S), "T": np.abs(self.T),
                "KS": np.abs(self.KS), "SG": np.abs(self.SG),
                "L": np.abs(self.loop), "Gs": np.abs(self.shaped)}


def first_crossing(omega: np.ndarray, mag: np.ndarray, level: float) -> float:
    """First frequency where ``mag`` passes below ``level``, log-interpolated."""
    above = mag >= level
    idx = np.nonzero(above[:-1] & ~above[1:])[0]
    if idx.size == 0:
        return float("nan")
    i = idx[0]
    lw = np.log(omega[i:i + 2])
    lm = np.log(mag[i:i + 2])
    frac = (np.log(level) - lm[0]) / (lm[1] - lm[0])
    return float(np.exp(lw[0] + frac * (lw[1] - lw[0])))


def sigma_report(res: SynthesisResult, g_nom, omega=None) -> SigmaReport:
    """Sensitivity-type curves of the negative-feedback loop ``L = G_nom C``."""
    g_nom = lti.as_ss(g_nom)
    omega = lti.DEFAULT_GRID if omega is None else np.asarray(omega, dtype=float)
    G = lti.freq_response(g_nom, omega).siso()
    C = lti.freq_response(tracking_controller(res), omega).siso()
    Gs = lti.freq_response(res.shaped_plant, omega).siso()
    L = G * C
    S = 1.0 / (1.0 + L)
    T = L / (1.0 + L)
    return SigmaReport(omega=omega, S=S, T=T, KS=C * S, SG=S * G, loop=L, shaped=Gs,
                       bandwidth=first_crossing(omega, np.abs(T), 1 / np.sqrt(2)),
                       loop_crossover=first_crossing(omega, np.abs(L), 1.0),
                       shaped_crossover=first_crossing(omega, np.abs(Gs), 1.0))


def closed_loop(g, controller: StateSpace) -> StateSpace:
    """Reference-to-output loop with unity negative feedback."""
    return lti.feedback(lti.series(controller, g), StateSpace.gain([[1.0]]), sign=-1)
