"""Small linear-systems toolbox: state space and transfer function types,
interconnections, Riccati solver, H-infinity norm, frequency response and
bilinear discretization.

Everything here is value-semantics: functions return new objects and never
mutate their arguments.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

DEFAULT_GRID = np.logspace(-2, 4, 400)


def _as_matrix(x, rows=None, cols=None) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(x, dtype=float))
    if arr.size == 0:
        arr = np.zeros((rows or 0, cols or 0))
    return arr


@dataclass(frozen=True)
class StateSpace:
    """Continuous-time realization ``x' = A x + B u``, ``y = C x + D u``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        D = _as_matrix(self.D)
        n = np.asarray(self.A).shape[0] if np.asarray(self.A).size else 0
        p, m = D.shape
        A = _as_matrix(self.A, n, n)
        B = _as_matrix(self.B, n, m)
        C = _as_matrix(self.C, p, n)
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape != (n, m):
            raise ValueError(f"B must be {n}x{m}, got {B.shape}")
        if C.shape != (p, n):
            raise ValueError(f"C must be {p}x{n}, got {C.shape}")
        for name, M in zip("ABCD", (A, B, C, D)):
            if not np.all(np.isfinite(M)):
                raise ValueError(f"{name} has non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.D.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.D.shape[0]

    @classmethod
    def gain(cls, D) -> "StateSpace":
        D = _as_matrix(D)
        p, m = D.shape
        return cls(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)), D)

    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.A) if self.n_states else np.zeros(0)

    def is_stable(self, margin: float = 0.0) -> bool:
        return self.n_states == 0 or bool(np.max(self.poles().real) < -margin)

    def evaluate(self, s: complex) -> np.ndarray:
        """Transfer matrix ``C (sI - A)^-1 B + D`` at a single complex point."""
        if self.n_states == 0:
            return self.D.astype(complex)
        M = s * np.eye(self.n_states) - self.A
        return self.C @ np.linalg.solve(M, self.B) + self.D

    def dc_gain(self) -> np.ndarray:
        return self.evaluate(0.0).real

    def __neg__(self) -> "StateSpace":
        return StateSpace(self.A, self.B, -self.C, -self.D)

    def scaled(self, k: float) -> "StateSpace":
        return StateSpace(self.A, self.B, k * self.C, k * self.D)


@dataclass(frozen=True)
class TransferFunction:
    """SISO rational function, coefficients in descending powers of ``s``."""

    num: tuple
    den: tuple

    def __post_init__(self):
        num = np.trim_zeros(np.atleast_1d(np.asarray(self.num, dtype=float)), "f")
        den = np.trim_zeros(np.atleast_1d(np.asarray(self.den, dtype=float)), "f")
        if den.size == 0:
            raise ValueError("denominator is identically zero")
        if num.size == 0:
            num = np.zeros(1)
        object.__setattr__(self, "num", tuple(num))
        object.__setattr__(self, "den", tuple(den))

    @property
    def is_proper(self) -> bool:
        return len(self.num) <= len(self.den)

    def evaluate(self, s):
        s = np.asarray(s, dtype=complex)
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def __mul__(self, other: "TransferFunction") -> "TransferFunction":
        if np.isscalar(other):
            return TransferFunction(np.multiply(self.num, other), self.den)
        return TransferFunction(np.polymul(self.num, other.num),
                                np.polymul(self.den, other.den))

    __rmul__ = __mul__

    def to_ss(self) -> StateSpace:
        return tf_to_ss(self)


@dataclass(frozen=True)
class FrequencyResponse:
    """Sampled frequency response; ``values[i]`` is the p x m matrix at ``omega[i]``."""

    omega: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        if w.ndim != 1 or np.any(w <= 0) or np.any(np.diff(w) <= 0):
            raise ValueError("omega must be strictly increasing and positive")

    def siso(self) -> np.ndarray:
        return self.values[:, 0, 0]


def tf_to_ss(g: TransferFunction) -> StateSpace:
    """Controllable canonical realization of a proper SISO transfer function."""
    if not g.is_proper:
        raise ValueError("transfer function is improper (deg num > deg den)")
    den = np.asarray(g.den, dtype=float)
    num = np.asarray(g.num, dtype=float)
    a0 = den[0]
    den = den / a0
    num = num / a0
    n = len(den) - 1
    num = np.concatenate([np.zeros(n + 1 - len(num)), num])
    d = num[0]
    if n == 0:
        return StateSpace.gain([[d]])
    # strictly proper remainder b(s) - d a(s)
    rem = num[1:] - d * den[1:]
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = rem.reshape(1, n)
    return StateSpace(A, B, C, [[d]])


def as_ss(g) -> StateSpace:
    if isinstance(g, StateSpace):
        return g
    if isinstance(g, TransferFunction):
        return tf_to_ss(g)
    return StateSpace.gain(g)


def append(*systems: StateSpace) -> StateSpace:
    """Block-diagonal stacking of independent systems."""
    systems = [as_ss(s) for s in systems]
    return StateSpace(sla.block_diag(*[s.A for s in systems]),
                      sla.block_diag(*[s.B for s in systems]),
                      sla.block_diag(*[s.C for s in systems]),
                      sla.block_diag(*[s.D for s in systems]))


def interconnect(P: StateSpace, Q, Bw, Cz, Dzw) -> StateSpace:
    """Close static wiring around ``P``.

    Inputs of ``P`` are ``u = Q y + Bw w`` and the new outputs are
    ``z = Cz y + Dzw w``, where ``y`` are the outputs of ``P`` and ``w`` the
    external inputs of the result.
    """
    Q, Bw, Cz, Dzw = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (Q, Bw, Cz, Dzw))
    E = np.eye(P.n_outputs) - P.D @ Q
    if np.linalg.cond(E) > 1e12:
        raise ValueError("ill-posed interconnection (I - D Q singular)")
    F = np.linalg.inv(E)
    A = P.A + P.B @ Q @ F @ P.C
    B = P.B @ (Q @ F @ P.D @ Bw + Bw)
    C = Cz @ F @ P.C
    D = Cz @ F @ P.D @ Bw + Dzw
    return StateSpace(A, B, C, D)


def series(g1, g2) -> StateSpace:
    """``g2`` driven by the output of ``g1``; transfer matrix ``G2 G1``."""
    g1, g2 = as_ss(g1), as_ss(g2)
    if g1.n_outputs != g2.n_inputs:
        raise ValueError(f"cannot connect {g1.n_outputs} outputs to {g2.n_inputs} inputs")
    n1, n2 = g1.n_states, g2.n_states
    A = np.block([[g1.A, np.zeros((n1, n2))], [g2.B @ g1.C, g2.A]])
    B = np.vstack([g1.B, g2.B @ g1.D])
    C = np.hstack([g2.D @ g1.C, g2.C])
    return StateSpace(A, B, C, g2.D @ g1.D)


def parallel(g1, g2) -> StateSpace:
    g1, g2 = as_ss(g1), as_ss(g2)
    if (g1.n_inputs, g1.n_outputs) != (g2.n_inputs, g2.n_outputs):
        raise ValueError("parallel connection needs matching dimensions")
    return StateSpace(sla.block_diag(g1.A, g2.A), np.vstack([g1.B, g2.B]), np.hstack([g1.C, g2.C]), g1.D + g2.D)


def feedback(g, k, sign: int = -1) -> StateSpace:
    """Closed loop from ``r`` to ``y`` with ``y = G (r + sign * K y)``."""
    g, k = as_ss(g), as_ss(k)
    if k.n_inputs != g.n_outputs or k.n_outputs != g.n_inputs:
        raise ValueError("feedback dimensions do not match")
    m, p = g.n_inputs, g.n_outputs
    P = append(g, k)
    Q = np.block([[np.zeros((m, p)), sign * np.eye(m)],
                  [np.eye(p), np.zeros((p, m))]])
    Bw = np.vstack([np.eye(m), np.zeros((p, m))])
    Cz = np.hstack([np.eye(p), np.zeros((p, m))])
    return interconnect(P, Q, Bw, Cz, np.zeros((p, m)))


def care_solve(A, B, Q, R) -> np.ndarray:
    """Stabilizing solution of ``A'X + XA - XBR^-1B'X + Q = 0``.

    Uses the ordered real Schur form of the Hamiltonian matrix; the stable
    invariant subspace ``[U1; U2]`` gives ``X = U2 U1^-1``.
    """
    A, B, Q, R = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, Q, R))
    n = A.shape[0]
    if n == 0 or A.size == 0:
        return np.zeros((0, 0))
    for name, M in (("Q", Q), ("R", R)):
        if not np.allclose(M, M.T, atol=1e-12 * max(1.0, np.abs(M).max())):
            raise ValueError(f"{name} must be symmetric")
    G = B @ np.linalg.solve(R, B.T)
    H = np.block([[A, -G], [-Q, -A.T]])
    eigs = np.linalg.eigvals(H)
    scale = max(1.0, np.linalg.norm(H, 1))
    if np.any(np.abs(eigs.real) < 1e-10 * scale):
        raise np.linalg.LinAlgError("Hamiltonian has eigenvalues on the imaginary axis; "
                                    "no stabilizing solution")
    T, Z, sdim = sla.schur(H, output="real", sort="lhp")
    if sdim != n:
        raise np.linalg.LinAlgError(f"stable subspace has dimension {sdim}, expected {n}")
    U1, U2 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(U1) > 1e14:
        raise np.linalg.LinAlgError("stable subspace is not a graph; (A, B) not stabilizable")
    X = np.linalg.solve(U1.T, U2.T).T
    return (X + X.T) / 2


def care_residual(A, B, Q, R, X) -> float:
    Rinv_Bt = np.linalg.solve(np.atleast_2d(R), np.atleast_2d(B).T)
    res = A.T @ X + X @ A - X @ B @ Rinv_Bt @ X + Q
    return float(np.linalg.norm(res, "fro"))


def freq_response(g, omega=None) -> FrequencyResponse:
    """Evaluate ``C (jwI - A)^-1 B + D`` on a frequency grid (rad/s)."""
    g = as_ss(g)
    omega = DEFAULT_GRID if omega is None else np.asarray(omega, dtype=float)
    N = len(omega)
    if g.n_states == 0:
        vals = np.broadcast_to(g.D.astype(complex), (N,) + g.D.shape).copy()
        return FrequencyResponse(omega, vals)
    n = g.n_states
    poles = g.poles()
    dist = np.min(np.abs(1j * omega[:, None] - poles[None, :]), axis=1)
    if np.any(dist < 1e-12 * max(1.0, np.max(np.abs(poles)))):
        raise ValueError("frequency grid hits an imaginary-axis pole")
    M = 1j * omega[:, None, None] * np.eye(n)[None] - g.A[None]
    X = np.linalg.solve(M, np.broadcast_to(g.B.astype(complex), (N,) + g.B.shape))
    vals = g.C[None] @ X + g.D[None]
    return FrequencyResponse(omega, vals)


def sigma_max(fr: FrequencyResponse) -> np.ndarray:
    return np.linalg.svd(fr.values, compute_uv=False)[:, 0]


def _peak_above(g: StateSpace, gamma: float) -> float:
    """Largest singular value found at imaginary-axis Hamiltonian eigenvalues.

    The Hamiltonian built for level ``gamma`` has an eigenvalue ``j w`` exactly
    when ``gamma`` is a singular value of ``G(j w)``. Near-imaginary
    eigenvalues are only candidates; each is confirmed by evaluating the
    frequency response there, which keeps flat (all-pass) responses from
    fooling a fixed real-part threshold. Returns 0 when no candidate reaches
    ``gamma``.
    """
    A, B, C, D = g.A, g.B, g.C, g.D
    m, p = g.n_inputs, g.n_outputs
    R = D.T @ D - gamma**2 * np.eye(m)
    S = D @ D.T - gamma**2 * np.eye(p)
    Ri = np.linalg.inv(R)
    Ah = A - B @ Ri @ D.T @ C
    H = np.block([[Ah, -gamma * B @ Ri @ B.T],
                  [gamma * C.T @ np.linalg.inv(S) @ C, -Ah.T]])
    eigs = np.linalg.eigvals(H)
    loose = 1e-4 * np.maximum(1.0, np.abs(eigs))
    cand = np.abs(eigs[(np.abs(eigs.real) < loose) & (eigs.imag >= 0)].imag)
    best = 0.0
    for w in cand:
        sv = np.linalg.svd(g.evaluate(1j * w), compute_uv=False)[0]
        if sv >= gamma * (1 - 1e-9):
            best = max(best, sv)
    return best


def hinf_norm(g, tol: float = 1e-4, omega=None) -> float:
    """H-infinity norm of a stable system by Hamiltonian bisection.

    The bracket starts at the peak singular value over a frequency grid and
    is refined until its relative width is below ``tol``.
    """
    g = as_ss(g)
    if not g.is_stable():
        raise ValueError("H-infinity norm is only defined here for stable systems")
    dnorm = float(np.linalg.norm(g.D, 2)) if g.D.size else 0.0
    if g.n_states == 0:
        return dnorm
    grid = DEFAULT_GRID if omega is None else np.asarray(omega, dtype=float)
    extra = np.abs(g.poles())
    grid = np.unique(np.concatenate([grid, extra[extra > 0]]))
    lo = max(dnorm, float(np.max(sigma_max(freq_response(g, grid)))),
             float(np.linalg.norm(g.dc_gain(), 2)))
    if lo == 0.0:
        return 0.0
    hi = 2 * lo
    while (peak := _peak_above(g, hi)) > 0:
        lo, hi = peak, 2 * peak
    while (hi - lo) > tol * lo:
        mid = 0.5 * (lo + hi)
        peak = _peak_above(g, mid)
        if peak > 0:
            lo = max(mid, peak)
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class DiscreteStateSpace:
    """Discrete-time realization with sample time ``dt``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    dt: float

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    def step(self, x: np.ndarray, u) -> tuple[np.ndarray, np.ndarray]:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        y = self.C @ x + self.D @ u
        return self.A @ x + self.B @ u, y

    def evaluate(self, z: complex) -> np.ndarray:
        if self.n_states == 0:
            return self.D.astype(complex)
        return self.C @ np.linalg.solve(z * np.eye(self.n_states) - self.A, self.B) + self.D

    def dc_gain(self) -> np.ndarray:
        return self.evaluate(1.0).real

    def freq_response(self, omega) -> np.ndarray:
        return np.array([self.evaluate(np.exp(1j * w * self.dt)) for w in omega])


def discretize_tustin(g, dt: float) -> DiscreteStateSpace:
    """Bilinear (trapezoidal) discretization."""
    g = as_ss(g)
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = g.n_states
    if n == 0:
        return DiscreteStateSpace(g.A, g.B, g.C, g.D.copy(), dt)
    E = np.eye(n) - g.A * dt / 2
    if np.linalg.cond(E) > 1e12:
        raise ValueError("I - A dt/2 is singular")
    Ad = np.linalg.solve(E, np.eye(n) + g.A * dt / 2)
    Bd = np.linalg.solve(E, g.B * dt)
    Cd = np.linalg.solve(E.T, g.C.T).T
    Dd = g.D + g.C @ Bd / 2
    return DiscreteStateSpace(Ad, Bd, Cd, Dd, dt)


def step_response(g, t_end: float, dt: float, amplitude: float = 1.0):
    """Exact step response (zero-order hold is exact for a constant input).

    Returns ``(t, y, x)`` with ``y`` shaped (N, p) and ``x`` shaped (N, n).
    """
    g = as_ss(g)
    n, m = g.n_states, g.n_inputs
    N = int(round(t_end / dt)) + 1
    t = np.arange(N) * dt
    u = amplitude * np.ones(m)
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = g.A
    aug[:n, n:] = g.B
    Phi = sla.expm(aug * dt)
    Ad, Bd = Phi[:n, :n], Phi[:n, n:]
    # x[k + i] = Ad^i x[k] + x[i]: build one block by recursion, then tile it
    blk = max(1, min(N, int(np.sqrt(N)) + 1))
    powers = np.empty((blk, n, n))
    powers[0] = np.eye(n)
    head = np.zeros((blk, n))
    for i in range(1, blk):
        powers[i] = Ad @ powers[i - 1]
        head[i] = Ad @ head[i - 1] + Bd @ u
    x = np.zeros((N, n))
    for k in range(0, N, blk):
        rows = min(blk, N - k)
        x[k:k + rows] = powers[:rows] @ x[k] + head[:rows] if k else head[:rows]
        if k + blk < N:
            x[k + blk] = Ad @ (powers[blk - 1] @ x[k] + head[blk - 1]) + Bd @ u
    y = x @ g.C.T + u @ g.D.T
    return t, y, x


def random_stable(n: int, m: int, p: int, rng: np.random.Generator,
                  strictly_proper: bool = False) -> StateSpace:
    """Random stable system for property tests."""
    A = rng.standard_normal((n, n))
    shift = np.max(np.linalg.eigvals(A).real) + rng.uniform(0.1, 2.0)
    A = A - shift * np.eye(n)
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    D = np.zeros((p, m)) if strictly_proper else rng.standard_normal((p, m))
    return StateSpace(A, B, C, D)
