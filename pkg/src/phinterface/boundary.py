"""Boundary-port machinery for formally skew-symmetric operators.

Operators are of the form sum_i P_i d^i/dz^i with P_i = (-1)^(i+1) P_i^T and
P_N invertible.  The symmetric block matrix P pairs boundary traces, R_ext
turns traces into boundary flow/effort ports, and 2x4 condition matrices W_B
on the ports are factored as S [I+V, I-V] and classified by the definiteness
of W_B Sigma W_B^T (contraction / unitary / exponentially stable candidates).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .fields import gauss_points

DEFINITE_TOL = 1e-10


def sigma_matrix(dim: int) -> np.ndarray:
    """Sigma = [[0, I], [I, 0]] of size 2*dim."""
    s = np.zeros((2 * dim, 2 * dim))
    s[:dim, dim:] = np.eye(dim)
    s[dim:, :dim] = np.eye(dim)
    return s


P1 = np.array([[0.0, -1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class OperatorSpec:
    """Coefficients P_0 .. P_N of a formally skew-symmetric operator."""

    n: int
    N: int
    P: tuple

    def __post_init__(self):
        mats = tuple(np.atleast_2d(np.asarray(m, dtype=float)) for m in self.P)
        object.__setattr__(self, "P", mats)
        if len(mats) != self.N + 1:
            raise ValueError("need N+1 coefficient matrices P_0..P_N")
        for i, m in enumerate(mats):
            if m.shape != (self.n, self.n):
                raise ValueError(f"P_{i} has shape {m.shape}, expected ({self.n},{self.n})")
            want = (-1.0) ** (i + 1) * m.T
            if np.max(np.abs(m - want)) > 1e-12 * max(1.0, np.max(np.abs(m))):
                raise ValueError(f"P_{i} violates P_i = (-1)^(i+1) P_i^T")
        if abs(np.linalg.det(mats[self.N])) < 1e-300:
            raise ValueError("P_N must be invertible")

    def apply(self, polys):
        """J e for a tuple of per-component polynomials (exact differentiation)."""
        out = None
        derivs = list(polys)
        for i in range(self.N + 1):
            vals = self.P[i]
            term = [sum(vals[r, c] * derivs[c] for c in range(self.n)) for r in range(self.n)]
            out = term if out is None else [o + t for o, t in zip(out, term)]
            derivs = [p.deriv() for p in derivs]
        return tuple(out)


def pairing_blocks(P_list, n: int, N: int) -> np.ndarray:
    """Raw block pattern: block (i,j) = (-1)^i P_{i+j+1} (no validation)."""
    P = np.zeros((n * N, n * N))
    for i in range(N):
        for j in range(N):
            k = i + j + 1
            if k <= N:
                blk = np.atleast_2d(np.asarray(P_list[k], dtype=float))
                P[i * n:(i + 1) * n, j * n:(j + 1) * n] = (-1.0) ** i * blk
    return P


def build_P(spec: OperatorSpec) -> np.ndarray:
    """Symmetric boundary-pairing matrix of a validated operator."""
    P = pairing_blocks(spec.P, spec.n, spec.N)
    if np.max(np.abs(P - P.T)) > 1e-12 * max(1.0, np.max(np.abs(P))):
        raise AssertionError("constructed P is not symmetric")
    return P


def build_Rext(P: np.ndarray) -> np.ndarray:
    """R_ext = 1/sqrt(2) [[P, -P], [I, I]]; satisfies R^T Sigma R = diag(P, -P)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    m = P.shape[0]
    if np.max(np.abs(P - P.T)) > 1e-12 * max(1.0, np.max(np.abs(P))):
        raise ValueError("P must be symmetric")
    if abs(np.linalg.det(P)) < 1e-300:
        raise ValueError("P must be invertible")
    eye = np.eye(m)
    R = np.block([[P, -P], [eye, eye]]) / np.sqrt(2.0)
    check = R.T @ sigma_matrix(m) @ R - np.block(
        [[P, np.zeros((m, m))], [np.zeros((m, m)), -P]])
    if np.max(np.abs(check)) > 1e-10 * max(1.0, np.max(np.abs(P))):
        raise AssertionError("R_ext factorization identity failed")
    return R


P1_REXT = build_Rext(P1)
P1_REXT_INV = np.linalg.inv(P1_REXT)


@dataclass(frozen=True)
class BoundaryPorts:
    f_boundary: np.ndarray
    e_boundary: np.ndarray


def trace_vector(polys, a: float, b: float, N: int) -> np.ndarray:
    """(e(b), ..., d^{N-1}e(b), e(a), ..., d^{N-1}e(a)) for polynomial components."""
    vals_b, vals_a = [], []
    derivs = list(polys)
    for _ in range(N):
        vals_b.extend(float(p(b)) for p in derivs)
        vals_a.extend(float(p(a)) for p in derivs)
        derivs = [p.deriv() for p in derivs]
    return np.array(vals_b + vals_a)


def boundary_ports(trace: np.ndarray, Rext: np.ndarray) -> BoundaryPorts:
    trace = np.asarray(trace, dtype=float)
    if trace.size != Rext.shape[1]:
        raise ValueError(f"trace length {trace.size} does not match R_ext {Rext.shape}")
    fe = Rext @ trace
    half = fe.size // 2
    return BoundaryPorts(fe[:half], fe[half:])


def stokes_identity_residual(spec: OperatorSpec, e1, e2, a: float, b: float) -> float:
    """|<J e1, e2> + <e1, J e2> - [trace^T P trace]_a^b| for polynomial fields.

    Quadrature is Gauss-Legendre with 16 nodes, exact for the polynomial
    integrands up to degree 31.
    """
    Je1 = spec.apply(e1)
    Je2 = spec.apply(e2)
    z, w = gauss_points(a, b, 16)

    def dot(ps, qs):
        return float(np.sum(w * sum(np.asarray(p(z)) * np.asarray(q(z))
                                    for p, q in zip(ps, qs))))

    lhs = dot(Je1, e2) + dot(e1, Je2)
    P = build_P(spec)
    u1 = _stacked_derivs(e1, spec.N)
    u2 = _stacked_derivs(e2, spec.N)
    rhs = float(u1(b) @ P @ u2(b) - u1(a) @ P @ u2(a))
    return abs(lhs - rhs)


def _stacked_derivs(polys, N):
    rows = []
    derivs = list(polys)
    for _ in range(N):
        rows.extend(derivs)
        derivs = [p.deriv() for p in derivs]

    def at(z):
        return np.array([float(p(z)) for p in rows])

    return at


class Classification(enum.Enum):
    INVALID_RANK = "invalid_rank"
    CONTRACTION = "contraction"
    UNITARY_CANDIDATE = "unitary_candidate"
    EXPONENTIALLY_STABLE_CANDIDATE = "exponentially_stable_candidate"


class FactorizationError(ValueError):
    pass


def factor_WB(WB: np.ndarray):
    """Canonical factorization W_B = S [I+V, I-V] with S = (W1+W2)/2.

    Raises FactorizationError when W1 + W2 is singular (no factorization with
    invertible S exists).
    """
    WB = np.atleast_2d(np.asarray(WB, dtype=float))
    if WB.shape != (2, 4):
        raise ValueError("W_B must be 2x4")
    W1, W2 = WB[:, :2], WB[:, 2:]
    S = 0.5 * (W1 + W2)
    if abs(np.linalg.det(S)) < 1e-12 * max(1.0, np.max(np.abs(WB)) ** 2):
        raise FactorizationError("no S[I+V, I-V] factorization with invertible S")
    V = np.linalg.solve(S, 0.5 * (W1 - W2))
    recon = np.hstack([S @ (np.eye(2) + V), S @ (np.eye(2) - V)])
    if np.max(np.abs(recon - WB)) > 1e-10 * max(1.0, np.max(np.abs(WB))):
        raise AssertionError("factorization reassembly failed")
    return S, V


@dataclass(frozen=True)
class BoundaryConditionSpec:
    WB: np.ndarray
    r: float
    sigma_form: np.ndarray
    classification: Classification
    S: np.ndarray | None
    V: np.ndarray | None

    @property
    def is_valid(self) -> bool:
        return self.classification is not Classification.INVALID_RANK


def classify_conditions(WB: np.ndarray, r: float) -> BoundaryConditionSpec:
    """Rank and Sigma-definiteness verdict for a boundary condition matrix.

    contraction: W_B Sigma W_B^T >= 0 (with rank 2); unitary_candidate
    additionally needs r = 0 and W_B Sigma W_B^T = 0; the verdict is
    exponentially_stable_candidate when the form is strictly positive.
    """
    if r < 0:
        raise ValueError("passivity constant r must be nonnegative")
    WB = np.atleast_2d(np.asarray(WB, dtype=float))
    if WB.shape != (2, 4):
        raise ValueError("W_B must be 2x4")
    sigma_form = WB @ sigma_matrix(2) @ WB.T

    sv = scipy.linalg.svdvals(WB)
    if sv[0] == 0 or sv[-1] <= 1e-10 * sv[0]:
        return BoundaryConditionSpec(WB, r, sigma_form, Classification.INVALID_RANK,
                                     None, None)

    try:
        S, V = factor_WB(WB)
    except FactorizationError:
        S = V = None

    sym = 0.5 * (sigma_form + sigma_form.T)
    eigs = scipy.linalg.eigvalsh(sym)
    scale = max(1.0, float(np.max(np.abs(sym))))
    if eigs[0] >= DEFINITE_TOL:
        cls = Classification.EXPONENTIALLY_STABLE_CANDIDATE
    elif eigs[0] >= -DEFINITE_TOL * scale:
        if r == 0.0 and np.max(np.abs(sym)) <= DEFINITE_TOL:
            cls = Classification.UNITARY_CANDIDATE
        else:
            cls = Classification.CONTRACTION
    else:
        cls = Classification.INVALID_RANK
    return BoundaryConditionSpec(WB, r, sigma_form, cls, S, V)


def kernel_basis(spec: BoundaryConditionSpec) -> np.ndarray:
    """Columns spanning ker(W_B): [[I - V], [-I - V]]."""
    if spec.V is None:
        raise ValueError("boundary condition spec has no S[I+V, I-V] factorization")
    K = np.vstack([np.eye(2) - spec.V, -np.eye(2) - spec.V])
    if np.max(np.abs(spec.WB @ K)) > 1e-10 * max(1.0, np.max(np.abs(spec.WB))):
        raise AssertionError("kernel basis check failed")
    return K


def adjoint_condition_matrix(spec: BoundaryConditionSpec) -> np.ndarray:
    """Boundary condition matrix of the adjoint operator: [I+V^T, -(I-V^T)].

    Its kernel is exactly the set of boundary ports orthogonal (in the Sigma
    pairing) to ker(W_B); for orthogonal V it has the same kernel as W_B.
    """
    if spec.V is None:
        raise ValueError("boundary condition spec has no S[I+V, I-V] factorization")
    Vt = spec.V.T
    return np.hstack([np.eye(2) + Vt, -(np.eye(2) - Vt)])


def transmission_line_WB(R_b: float) -> np.ndarray:
    """Port-space condition matrix for V(a) = 0, V(b) = R_b I(b)."""
    Wtilde = np.array([[0.0, 0.0, 1.0, 0.0], [-1.0, R_b, 0.0, 0.0]])
    return Wtilde @ P1_REXT_INV
