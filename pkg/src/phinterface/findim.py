"""Finite-dimensional port-Hamiltonian building blocks.

Dirac structures live in the bond space R^n x R^n of flow/effort pairs; the
power-conserving subspaces are characterized through the plus pairing
<<(f1,e1),(f2,e2)>> = e1.f2 + e2.f1.  Input-state-output systems
xdot = (J - R) grad H(x) + G u,  y = G^T grad H(x) are integrated with the
implicit midpoint rule, which keeps quadratic energies exact and yields a
per-step passivity ledger for the general case.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

RANK_RTOL = 1e-10
PAIRING_TOL = 1e-10


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class BondVector:
    """A flow/effort pair in a finite-dimensional bond space."""

    f: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        f = np.atleast_1d(np.asarray(self.f, dtype=float))
        e = np.atleast_1d(np.asarray(self.e, dtype=float))
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "e", e)
        if f.shape != e.shape or f.ndim != 1:
            raise DimensionError("flow and effort must be vectors of equal length")

    @property
    def n(self) -> int:
        return self.f.size

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.f, self.e])


def plus_pairing(b1: BondVector, b2: BondVector) -> float:
    """<<b1, b2>> = <e1, f2> + <e2, f1>."""
    if b1.n != b2.n:
        raise DimensionError(f"bond dimensions differ: {b1.n} != {b2.n}")
    return float(b1.e @ b2.f + b2.e @ b1.f)


def _pairing_sigma(n: int) -> np.ndarray:
    # <<v1, v2>> = v1^T Sigma v2 for stacked vectors v = (f; e)
    s = np.zeros((2 * n, 2 * n))
    s[:n, n:] = np.eye(n)
    s[n:, :n] = np.eye(n)
    return s


@dataclass(frozen=True)
class LinearSubspace:
    """Subspace of the bond space, spanned by stacked columns (f; e)."""

    ambient_dim: int
    basis: np.ndarray  # shape (2n, k)

    def __post_init__(self):
        basis = np.atleast_2d(np.asarray(self.basis, dtype=float))
        object.__setattr__(self, "basis", basis)
        if self.ambient_dim % 2 != 0:
            raise DimensionError("ambient dimension must be even (flows x efforts)")
        if basis.shape[0] != self.ambient_dim:
            raise DimensionError("basis rows must match the ambient dimension")
        sv = scipy.linalg.svdvals(basis) if basis.size else np.array([])
        if basis.shape[1] and (sv.size == 0 or sv[-1] <= RANK_RTOL * sv[0]):
            raise DimensionError("basis vectors are numerically dependent")

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class DiracVerdict:
    is_dirac: bool
    dim_ok: bool
    pairing_vanishes: bool


def dirac_check(D: LinearSubspace) -> DiracVerdict:
    """A subspace is a Dirac structure iff the plus pairing vanishes on it and
    its dimension equals the flow-space dimension."""
    n = D.ambient_dim // 2
    gram = D.basis.T @ _pairing_sigma(n) @ D.basis
    scale = max(1.0, float(np.max(np.abs(D.basis), initial=0.0)) ** 2)
    pairing_vanishes = bool(np.max(np.abs(gram), initial=0.0) <= PAIRING_TOL * scale)
    dim_ok = D.dim == n
    return DiracVerdict(pairing_vanishes and dim_ok, dim_ok, pairing_vanishes)


def graph_dirac(J: np.ndarray) -> LinearSubspace:
    """Graph of a skew-symmetric map: span{(-J e_i, e_i)}."""
    J = np.asarray(J, dtype=float)
    n = J.shape[0]
    if J.shape != (n, n) or np.max(np.abs(J + J.T)) > 1e-12 * max(1.0, np.max(np.abs(J))):
        raise ValueError("J must be square and skew-symmetric")
    return LinearSubspace(2 * n, np.vstack([-J, np.eye(n)]))


def separable_dirac(K: np.ndarray, n: int | None = None) -> LinearSubspace:
    """K x K^perp for a subspace K of the flow space (basis columns)."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if n is None:
        n = K.shape[0]
    Kp = scipy.linalg.null_space(K.T) if K.shape[1] else np.eye(n)
    k, kp = K.shape[1], Kp.shape[1]
    basis = np.zeros((2 * n, k + kp))
    basis[:n, :k] = K
    basis[n:, k:] = Kp
    return LinearSubspace(2 * n, basis)


@dataclass(frozen=True)
class ResistiveRelation:
    """Linear resistive structure Rf f_R + Re e_R = 0."""

    Rf: np.ndarray
    Re: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Rf", np.atleast_2d(np.asarray(self.Rf, dtype=float)))
        object.__setattr__(self, "Re", np.atleast_2d(np.asarray(self.Re, dtype=float)))
        if self.Rf.shape != self.Re.shape or self.Rf.shape[0] != self.Rf.shape[1]:
            raise DimensionError("Rf and Re must be square matrices of equal size")


@dataclass(frozen=True)
class ResistiveVerdict:
    passed: bool
    symmetric_psd: bool
    full_rank: bool
    max_sampled_power: float


def resistive_check(rel: ResistiveRelation, samples: int = 32, seed: int = 0) -> ResistiveVerdict:
    """Check Rf Re^T = Re Rf^T >= 0 and rank [Rf Re] = m; certify e.f <= 0 on
    sampled members f = Re^T lam, e = -Rf^T lam of the relation."""
    m = rel.Rf.shape[0]
    prod = rel.Rf @ rel.Re.T
    scale = max(1.0, float(np.max(np.abs(prod))))
    sym = np.max(np.abs(prod - prod.T)) <= 1e-12 * scale
    psd = sym and float(np.min(scipy.linalg.eigvalsh(0.5 * (prod + prod.T)))) >= -1e-12 * scale
    stack = np.hstack([rel.Rf, rel.Re])
    sv = scipy.linalg.svdvals(stack)
    full_rank = bool(sv[-1] > RANK_RTOL * sv[0]) if sv[0] > 0 else False

    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(samples):
        lam = rng.standard_normal(m)
        f, e = rel.Re.T @ lam, -rel.Rf.T @ lam
        worst = max(worst, float(e @ f))
    return ResistiveVerdict(sym and psd and full_rank, sym and psd, full_rank, worst)


@dataclass(frozen=True)
class IsoSystem:
    """Input-state-output port-Hamiltonian system (constant J, R, G)."""

    J: np.ndarray
    R: np.ndarray
    G: np.ndarray
    gradH: Callable[[np.ndarray], np.ndarray]
    H: Callable[[np.ndarray], float]

    def __post_init__(self):
        J = np.atleast_2d(np.asarray(self.J, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        G = np.asarray(self.G, dtype=float)
        if G.ndim == 1:
            G = G[:, None]
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "G", G)
        if np.max(np.abs(J + J.T)) > 1e-12 * max(1.0, np.max(np.abs(J))):
            raise ValueError("J must be skew-symmetric")
        scale = max(1.0, float(np.max(np.abs(R))))
        if np.min(scipy.linalg.eigvalsh(0.5 * (R + R.T))) < -1e-12 * scale:
            raise ValueError("R must be positive semidefinite")

    @property
    def n(self) -> int:
        return self.J.shape[0]


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray          # (steps+1, n)
    y: np.ndarray          # (steps+1, k)
    H: np.ndarray
    supplied_power: np.ndarray  # cumulative integral of u^T y (midpoint rule)
    passivity_ok: bool = True
    worst_ledger_gap: float = 0.0


def _check_gradient(sys: IsoSystem, x0: np.ndarray, rtol: float = 1e-5):
    h = 1e-6
    g = sys.gradH(x0)
    for i in range(x0.size):
        dx = np.zeros_like(x0)
        dx[i] = h
        fd = (sys.H(x0 + dx) - sys.H(x0 - dx)) / (2 * h)
        if abs(fd - g[i]) > rtol * max(1.0, abs(g[i])):
            raise ValueError(
                f"gradH inconsistent with H at component {i}: fd={fd:.6e} grad={g[i]:.6e}")


class MidpointDivergence(RuntimeError):
    def __init__(self, step: int, residual: float):
        super().__init__(f"implicit midpoint Newton failed at step {step} "
                         f"(residual {residual:.3e})")
        self.step = step


def iso_simulate(sys: IsoSystem, x0, u: Callable[[float], np.ndarray] | None,
                 dt: float, t_end: float, newton_tol: float = 1e-12,
                 newton_maxit: int = 50) -> Trajectory:
    """Implicit-midpoint integration with a per-step passivity ledger.

    Each step solves x' = x + dt * [(J-R) gradH(x_mid) + G u(t_mid)] with
    x_mid = (x + x')/2 by Newton iteration (finite-difference Jacobian of
    gradH).  The ledger checks H(x') - H(x) <= dt * u(t_mid).y_mid + tol.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x0 = np.asarray(x0, dtype=float)
    _check_gradient(sys, x0)
    k = sys.G.shape[1]
    if u is None:
        u = lambda t: np.zeros(k)

    A = sys.J - sys.R
    steps = int(round(t_end / dt))
    t = np.arange(steps + 1) * dt
    xs = np.zeros((steps + 1, sys.n))
    ys = np.zeros((steps + 1, k))
    Hs = np.zeros(steps + 1)
    supplied = np.zeros(steps + 1)
    xs[0] = x0
    Hs[0] = sys.H(x0)
    ys[0] = sys.G.T @ sys.gradH(x0)

    eye = np.eye(sys.n)
    passivity_ok = True
    worst = 0.0
    fd_h = 1e-7

    for step in range(steps):
        x = xs[step]
        t_mid = t[step] + 0.5 * dt
        u_mid = np.atleast_1d(np.asarray(u(t_mid), dtype=float))
        xn = x.copy()
        converged = False
        for _ in range(newton_maxit):
            xm = 0.5 * (x + xn)
            res = xn - x - dt * (A @ sys.gradH(xm) + sys.G @ u_mid)
            if np.linalg.norm(res) <= newton_tol * (1.0 + np.linalg.norm(xn)):
                converged = True
                break
            # finite-difference Jacobian of gradH at the midpoint
            Hess = np.zeros((sys.n, sys.n))
            for i in range(sys.n):
                dxi = np.zeros(sys.n)
                dxi[i] = fd_h
                Hess[:, i] = (sys.gradH(xm + dxi) - sys.gradH(xm - dxi)) / (2 * fd_h)
            Jac = eye - 0.5 * dt * (A @ Hess)
            xn = xn - np.linalg.solve(Jac, res)
        if not converged:
            raise MidpointDivergence(step, float(np.linalg.norm(res)))

        xm = 0.5 * (x + xn)
        y_mid = sys.G.T @ sys.gradH(xm)
        xs[step + 1] = xn
        Hs[step + 1] = sys.H(xn)
        ys[step + 1] = sys.G.T @ sys.gradH(xn)
        supplied[step + 1] = supplied[step] + dt * float(u_mid @ y_mid)

        gap = (Hs[step + 1] - Hs[step]) - dt * float(u_mid @ y_mid)
        tol = 1e-8 * (1.0 + abs(Hs[step]))
        worst = max(worst, gap)
        if gap > tol:
            passivity_ok = False

    return Trajectory(t, xs, ys, Hs, supplied, passivity_ok, worst)


# -- presets ------------------------------------------------------------------

def mass_spring(m: float = 1.0, k: float = 1.0) -> IsoSystem:
    """Undamped mass-spring oscillator, state (q, p)."""
    Q = np.diag([k, 1.0 / m])
    return IsoSystem(
        J=np.array([[0.0, 1.0], [-1.0, 0.0]]),
        R=np.zeros((2, 2)),
        G=np.zeros((2, 1)),
        gradH=lambda x: Q @ x,
        H=lambda x: 0.5 * float(x @ Q @ x),
    )


def levitated_ball(m: float = 1.0, g: float = 9.81, Rc: float = 1.0,
                   L0: float = 1.0) -> IsoSystem:
    """Magnetically levitated ball, state (q, p, phi) with voltage input.

    Inductance model L(q) = L0 / (1 + q^2), so the magnetic energy is
    phi^2 (1 + q^2) / (2 L0); the gradient is analytic.
    """
    def H(x):
        q, p, phi = x
        return m * g * q + p * p / (2 * m) + phi * phi * (1 + q * q) / (2 * L0)

    def gradH(x):
        q, p, phi = x
        return np.array([m * g + phi * phi * q / L0, p / m, phi * (1 + q * q) / L0])

    return IsoSystem(
        J=np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
        R=np.diag([0.0, 0.0, Rc]),
        G=np.array([0.0, 0.0, 1.0]),
        gradH=gradH,
        H=H,
    )
