"""Closed-form and ODE-based analysis of the interface generator.

The resolvent equation (lambda I - A) x = y decouples into linear ODEs on
the two sides of the interface,

    dx/dz = Q^{-1}(z) (lambda P1 - dQ/dz) x - Q^{-1}(z) P1 y(z),

whose fundamental solutions (transition matrices) are exact 2x2 matrix
exponentials for constant Q and adaptive Runge-Kutta solutions otherwise.
For r > 0 the interface conditions reduce to a constant transfer matrix C0
with x(l+) = C0 x(l-); for r = 0 they pin the privileged effort to zero on
both sides and the solve couples (x(a), x(l+)) through a 4x4 system.
Eigenvalues are the roots of the characteristic determinant assembled from
the same data, refined by Newton iteration from discrete-generator seeds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.integrate
import scipy.linalg

from .boundary import P1, P1_REXT, BoundaryConditionSpec, adjoint_condition_matrix
from .fields import PiecewiseField, fit_polynomial, gauss_points
from .interface_ops import (DomainSample, InterfaceSpec,
                            apply_interface_operator, effort_boundary_ports,
                            interface_ports)
from .profiles import CoefficientProfile, SideProfile

FIT_DEGREE = 24


def _expm2(B: np.ndarray) -> np.ndarray:
    """2x2 matrix exponential through eigendecomposition (expm fallback)."""
    vals, vecs = np.linalg.eig(B)
    if abs(vals[0] - vals[1]) > 1e-9 * (1.0 + abs(vals[0])):
        return vecs @ np.diag(np.exp(vals)) @ np.linalg.inv(vecs)
    return scipy.linalg.expm(B)


def _ode_matrix(side: SideProfile, lam: complex):
    def A_of(z: float) -> np.ndarray:
        Q = side.matrix_at(z)
        dQ = side.derivative_at(z)
        return np.linalg.solve(Q, lam * P1 - dQ)
    return A_of


def transition_matrix(side: str, z: float, s: float, lam: complex,
                      profile: CoefficientProfile) -> np.ndarray:
    """Fundamental solution Lambda(z, s) of the homogeneous side ODE."""
    sp = profile.side(side)
    if z == s:
        return np.eye(2, dtype=complex)
    if sp.is_constant:
        B = np.linalg.solve(sp.matrix_at(s), lam * P1)
        return _expm2((z - s) * B)
    A_of = _ode_matrix(sp, lam)

    def rhs(t, v):
        return (A_of(t) @ v.reshape(2, 2)).reshape(-1)

    sol = scipy.integrate.solve_ivp(rhs, (s, z), np.eye(2, dtype=complex).reshape(-1),
                                    rtol=1e-11, atol=1e-13, method="RK45")
    if not sol.success:
        raise RuntimeError(f"transition-matrix integration failed: {sol.message}")
    return sol.y[:, -1].reshape(2, 2)


def interface_transfer(profile: CoefficientProfile, spec: InterfaceSpec) -> np.ndarray:
    """Constant transfer matrix C0 with x(l+) = C0 x(l-), for r > 0.

    Built from the interface continuity and passivity relations expressed in
    the entries of Q^-(l), Q^+(l); requires Q11+(l) != 0 (guaranteed for
    positive definite profiles).
    """
    if spec.r <= 0:
        raise ValueError("C0 requires r > 0; r = 0 uses the pinned-effort solve path")
    Qm = profile.minus.matrix_at(spec.l)
    Qp = profile.plus.matrix_at(spec.l)
    r = spec.r
    det_p = Qp[0, 0] * Qp[1, 1] - Qp[0, 1] ** 2
    c1t = Qp[0, 0] / det_p * (1.0 + Qp[0, 1] / (r * Qp[0, 0]))
    c2t = -Qp[0, 1] / det_p
    c3t = -(1.0 + r * Qp[0, 1] * c1t) / (r * Qp[0, 0])
    c4t = (1.0 - Qp[0, 1] * c2t) / Qp[0, 0]
    # x1(l+) = c3t f_I + c4t (Q^- x(l-))_1,  x2(l+) = c1t f_I + c2t (Q^- x(l-))_1,
    # with f_I = (Q^- x(l-))_2
    c1 = c3t * Qm[0, 1] + c4t * Qm[0, 0]
    c2 = c3t * Qm[1, 1] + c4t * Qm[0, 1]
    c3 = c1t * Qm[0, 1] + c2t * Qm[0, 0]
    c4 = c1t * Qm[1, 1] + c2t * Qm[0, 1]
    return np.array([[c1, c2], [c3, c4]])


def _boundary_condition_map(bc: BoundaryConditionSpec, profile: CoefficientProfile,
                            adjoint: bool = False) -> np.ndarray:
    """2x4 map acting on (x(b); x(a)) through the effort traces."""
    W = adjoint_condition_matrix(bc) if adjoint else bc.WB
    Wt = W @ P1_REXT
    D = np.zeros((4, 4))
    D[:2, :2] = profile.plus.matrix_at(profile.b)
    D[2:, 2:] = profile.minus.matrix_at(profile.a)
    return Wt @ D


class _SideSolution:
    """Dense evaluator of the inhomogeneous side ODE via variation of constants.

    Constant-Q sides use the exact 2x2 exponential and a polynomial particular
    solution obtained by coefficient recursion; variable-Q sides integrate
    once with dense output.
    """

    def __init__(self, side: SideProfile, z0: float, z1: float, lam: complex,
                 y_polys=None):
        self.side = side
        self.z0, self.z1 = z0, z1
        self.lam = lam
        self.y_polys = y_polys
        self.constant = side.is_constant
        self._hom_dense = None
        self._part_dense = None
        if self.constant:
            self.B = np.linalg.solve(side.matrix_at(z0), lam * P1)
            self._pi = self._polynomial_particular()

    def _polynomial_particular(self):
        """Polynomial pi with pi' = B pi - g, g = Q^{-1} P1 y (coefficients
        solved top-down); the particular solution vanishing at z0 is then
        p(z) = pi(z) - Lambda(z, z0) pi(z0)."""
        if self.y_polys is None:
            return None
        Qinv_P1 = np.linalg.solve(self.side.matrix_at(self.z0), P1)
        g = np.zeros((max(p.degree() for p in self.y_polys) + 1, 2), dtype=complex)
        for i, p in enumerate(self.y_polys):
            conv = p.convert(kind=np.polynomial.Polynomial)
            for k, c in enumerate(conv.coef):
                g[k] += Qinv_P1[:, i] * c
        d = g.shape[0] - 1
        Binv = np.linalg.inv(self.B)
        pi = np.zeros((d + 1, 2), dtype=complex)
        pi[d] = Binv @ g[d]
        for k in range(d - 1, -1, -1):
            pi[k] = Binv @ (g[k] + (k + 1) * pi[k + 1])
        return pi

    def _pi_at(self, z: float) -> np.ndarray:
        acc = np.zeros(2, dtype=complex)
        for k in range(self._pi.shape[0] - 1, -1, -1):
            acc = acc * z + self._pi[k]
        return acc

    def homogeneous(self, z: float) -> np.ndarray:
        if self.constant:
            return _expm2((z - self.z0) * self.B)
        if self._hom_dense is None:
            def rhs(t, v):
                A = _ode_matrix(self.side, self.lam)(t)
                return (A @ v.reshape(2, 2)).reshape(-1)
            sol = scipy.integrate.solve_ivp(rhs, (self.z0, self.z1),
                                            np.eye(2, dtype=complex).reshape(-1),
                                            rtol=1e-11, atol=1e-13, dense_output=True)
            if not sol.success:
                raise RuntimeError(f"transition integration failed: {sol.message}")
            self._hom_dense = sol.sol
        if z == self.z0:
            return np.eye(2, dtype=complex)
        return np.asarray(self._hom_dense(z), dtype=complex).reshape(2, 2)

    def particular(self, z: float) -> np.ndarray:
        """p(z) = -int_{z0}^{z} Lambda(z, s) Q^{-1}(s) P1 y(s) ds."""
        if self.y_polys is None:
            return np.zeros(2, dtype=complex)
        if self.constant:
            return self._pi_at(z) - self.homogeneous(z) @ self._pi_at(self.z0)
        if self._part_dense is None:
            A_of = _ode_matrix(self.side, self.lam)

            def rhs(t, v):
                Q = self.side.matrix_at(t)
                g = -np.linalg.solve(Q, P1 @ np.array(
                    [complex(p(t)) for p in self.y_polys]))
                return A_of(t) @ v + g

            sol = scipy.integrate.solve_ivp(rhs, (self.z0, self.z1),
                                            np.zeros(2, dtype=complex),
                                            rtol=1e-11, atol=1e-13, dense_output=True)
            if not sol.success:
                raise RuntimeError(f"particular integration failed: {sol.message}")
            self._part_dense = sol.sol
        if z == self.z0:
            return np.zeros(2, dtype=complex)
        return np.asarray(self._part_dense(z), dtype=complex)

    def evaluate(self, z: float, x0: np.ndarray) -> np.ndarray:
        return self.homogeneous(z) @ x0 + self.particular(z)


@dataclass
class ResolventSolution:
    lam: float
    phi: PiecewiseField
    x_a: np.ndarray
    x_lplus: np.ndarray
    residual: float


def _fit_side(evaluate, lo, hi, deg=FIT_DEGREE):
    comps = []
    for i in range(2):
        comps.append(fit_polynomial(lambda z: np.array([evaluate(float(zz))[i].real
                                                        for zz in np.atleast_1d(z)]),
                                    lo, hi, deg))
    return tuple(comps)


def resolve(lam: float, y: PiecewiseField, profile: CoefficientProfile,
            bc: BoundaryConditionSpec, spec: InterfaceSpec) -> ResolventSolution:
    """Solve (lambda I - A) x = y analytically; returns x with a residual
    certified by independent differentiation of the fitted solution."""
    if lam <= 0:
        raise ValueError("the analytic solve path is set up for lambda > 0")
    if not bc.is_valid:
        raise ValueError("invalid boundary condition spec")
    a, l, b = profile.a, spec.l, profile.b

    left = _SideSolution(profile.minus, a, l, lam, y.left)
    right = _SideSolution(profile.plus, l, b, lam, y.right)
    Lam_m = left.homogeneous(l).real
    Lam_p = right.homogeneous(b).real
    p_m = left.particular(l).real
    p_p = right.particular(b).real
    Wmap = _boundary_condition_map(bc, profile)

    if spec.r > 0:
        C0 = interface_transfer(profile, spec)
        E = Lam_p @ C0 @ Lam_m
        q = Lam_p @ (C0 @ p_m) + p_p
        G = Wmap @ np.vstack([E, np.eye(2)])
        rhs = -Wmap @ np.vstack([q[:, None], np.zeros((2, 1))])
        try:
            x_a = np.linalg.solve(G, rhs).ravel()
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(
                f"boundary system singular at lambda={lam} "
                f"(cond unavailable): {exc}") from exc
        x_lminus = Lam_m @ x_a + p_m
        x_lplus = C0 @ x_lminus
    else:
        if not profile.is_diagonal:
            raise ValueError("the r = 0 solve path supports diagonal profiles only")
        Qm_l = profile.minus.matrix_at(l)
        Qp_l = profile.plus.matrix_at(l)
        M4 = np.zeros((4, 4))
        rhs4 = np.zeros(4)
        # unknowns (x(a), x(l+)); rows: e2(l-) = 0, e2(l+) = 0, boundary (2)
        M4[0, :2] = (Qm_l @ Lam_m)[1, :]
        rhs4[0] = -(Qm_l @ p_m)[1]
        M4[1, 2:] = Qp_l[1, :]
        M4[2:, 2:] = Wmap[:, :2] @ Lam_p
        M4[2:, :2] = Wmap[:, 2:]
        rhs4[2:] = -Wmap[:, :2] @ p_p
        sol = np.linalg.solve(M4, rhs4)
        x_a, x_lplus = sol[:2], sol[2:]
        x_lminus = Lam_m @ x_a + p_m

    phi_left = _fit_side(lambda z: left.evaluate(z, x_a.astype(complex)), a, l)
    phi_right = _fit_side(lambda z: right.evaluate(z, x_lplus.astype(complex)), l, b)
    phi = PiecewiseField(a, l, b, phi_left, phi_right)

    residual = _resolvent_residual(lam, phi, y, profile)
    return ResolventSolution(lam, phi, x_a, x_lplus, residual)


def _resolvent_residual(lam: float, phi: PiecewiseField, y: PiecewiseField,
                        profile: CoefficientProfile, n: int = 48) -> float:
    """||(lam I - A) phi - y||_L2 / ||y||_L2 via differentiation of the fit."""
    num = 0.0
    den = 0.0
    for side, lo, hi in (("minus", phi.a, phi.l), ("plus", phi.l, phi.b)):
        sp = profile.side(side)
        z, w = gauss_points(lo, hi, n)
        x = phi.eval_side(side, z)
        dx = phi.derivative().eval_side(side, z)
        Q = sp.matrix(z)
        dQ = np.array([[np.asarray(sp.q11.deriv()(z)), np.asarray(sp.q12.deriv()(z))],
                       [np.asarray(sp.q12.deriv()(z)), np.asarray(sp.q22.deriv()(z))]])
        dQ = np.broadcast_to(dQ.reshape(2, 2, -1), (2, 2, z.size))
        e_prime = (np.einsum("ijk,jk->ik", dQ, x) + np.einsum("ijk,jk->ik", Q, dx))
        res = lam * x - np.einsum("ij,jk->ik", P1, e_prime) - y.eval_side(side, z)
        num += float(np.sum(w * np.sum(res * res, axis=0)))
        den += float(np.sum(w * np.sum(y.eval_side(side, z) ** 2, axis=0)))
    return float(np.sqrt(num / max(den, 1e-300)))


def resolvent_norm(sol: ResolventSolution, y: PiecewiseField,
                   profile: CoefficientProfile, spec: InterfaceSpec):
    """(|R y|_{Q_l}, |y|_{Q_l}) for the Hille-Yosida contraction bound."""
    weight = profile.weight_at(spec.l)
    nx = sol.phi.weighted_inner(sol.phi, weight, n=64)
    ny = y.weighted_inner(y, weight, n=64)
    return float(np.sqrt(nx)), float(np.sqrt(ny))


def characteristic_matrix(lam: complex, profile: CoefficientProfile,
                          bc: BoundaryConditionSpec, spec: InterfaceSpec) -> np.ndarray:
    """Matrix whose determinant vanishes exactly at eigenvalues of A.

    2x2 (from the C0 transfer path) for r > 0; 4x4 (pinned interface effort)
    for r = 0.
    """
    a, l, b = profile.a, spec.l, profile.b
    Lam_m = transition_matrix("minus", l, a, lam, profile)
    Lam_p = transition_matrix("plus", b, l, lam, profile)
    Wmap = _boundary_condition_map(bc, profile).astype(complex)
    if spec.r > 0:
        C0 = interface_transfer(profile, spec)
        E = Lam_p @ C0 @ Lam_m
        return Wmap @ np.vstack([E, np.eye(2, dtype=complex)])
    Qm_l = profile.minus.matrix_at(l)
    Qp_l = profile.plus.matrix_at(l)
    M4 = np.zeros((4, 4), dtype=complex)
    M4[0, :2] = (Qm_l @ Lam_m)[1, :]
    M4[1, 2:] = Qp_l[1, :]
    M4[2:, 2:] = Wmap[:, :2] @ Lam_p
    M4[2:, :2] = Wmap[:, 2:]
    return M4


@dataclass
class Spectrum:
    eigenvalues: list
    abscissa: float
    method_agreement: float
    dropped_seeds: int = 0

    def to_dict(self):
        return {
            "eigenvalues": [{"re": float(v.real), "im": float(v.imag)}
                            for v in self.eigenvalues],
            "abscissa": self.abscissa,
            "agreement": self.method_agreement,
        }


def spectrum_scan(profile: CoefficientProfile, bc: BoundaryConditionSpec,
                  spec: InterfaceSpec, region, seeds) -> Spectrum:
    """Newton refinement of det G(lambda) = 0 from the given seeds.

    ``region`` is (re_min, re_max, im_min, im_max); converged roots outside
    it are discarded, duplicates merged at 1e-8.
    """
    re_min, re_max, im_min, im_max = region
    seeds = list(seeds)

    def det_G(lam):
        return np.linalg.det(characteristic_matrix(lam, profile, bc, spec))

    roots = []
    dropped = 0
    for seed in seeds:
        lam = complex(seed)
        ok = False
        for _ in range(60):
            h = 1e-6 * (1.0 + abs(lam))
            d0 = det_G(lam)
            dp = det_G(lam + h)
            dm = det_G(lam - h)
            deriv = (dp - dm) / (2 * h)
            if deriv == 0:
                break
            step = d0 / deriv
            if abs(step) > 0.5:
                step *= 0.5 / abs(step)
            lam = lam - step
            if abs(step) <= 1e-10:
                ok = True
                break
        if not ok:
            dropped += 1
            continue
        if not (re_min - 1e-9 <= lam.real <= re_max + 1e-9
                and im_min - 1e-9 <= lam.imag <= im_max + 1e-9):
            dropped += 1
            continue
        if all(abs(lam - r) > 1e-8 for r in roots):
            roots.append(lam)

    roots.sort(key=lambda v: -v.real)
    abscissa = max((v.real for v in roots), default=float("-inf"))
    agreement = 0.0
    if roots and seeds:
        seeds_arr = np.asarray(seeds, dtype=complex)
        agreement = max(float(np.min(np.abs(seeds_arr - r))) for r in roots)
    return Spectrum(roots, abscissa, agreement, dropped)


# -- adjoint --------------------------------------------------------------------

def adjoint_apply(sample: DomainSample, bc: BoundaryConditionSpec) -> PiecewiseField:
    """A* y = -J_l (Q_l y) after verifying membership in D(A*)."""
    e = sample.effort
    spec = sample.interface
    gap = abs(float(e.left[1](e.l)) - float(e.right[1](e.l)))
    if gap > 1e-8 * max(e.sup_norm(), 1e-30):
        raise ValueError("domain violation: Q_l y is not in D(J_l) "
                         "(privileged effort jumps at the interface)")
    ports = interface_ports(e, spec)
    scale = max(abs(ports.f_I), abs(ports.e_I), 1e-30)
    if abs(ports.f_I + spec.r * ports.e_I) > 1e-8 * scale:
        raise ValueError("domain violation: adjoint passivity f_I = -r e_I fails")
    fd, ed = effort_boundary_ports(e)
    W = adjoint_condition_matrix(bc)
    if np.max(np.abs(W @ np.concatenate([fd, ed]))) > 1e-8 * max(
            1.0, float(np.max(np.abs(np.concatenate([fd, ed]))))):
        raise ValueError("domain violation: adjoint boundary condition fails")
    return apply_interface_operator(e).scaled(-1.0)


# -- family of generators over a moving interface -------------------------------

class AssumptionError(RuntimeError):
    pass


@dataclass
class FamilySpec:
    l_path: Callable[[float], float]
    l_dot: Callable[[float], float]
    profile: CoefficientProfile
    bc: BoundaryConditionSpec
    r: float
    tau: float


def _omega_pair(weight_side: SideProfile, other_side: SideProfile, a, b,
                points: int = 256):
    """(omega1, omega2) with sym((Qw - Qo) P1 Qo') <= omega1 Qw and
    -d/dz[(Qw - Qo) P1 Qo] <= omega2 Qw on a z-grid."""
    zs = np.linspace(a, b, points)

    def sym(mat):
        return 0.5 * (mat + mat.T)

    # polynomial product entries of T = (Qw - Qo) P1 Qo (diagonal profiles)
    d1 = weight_side.q11 - other_side.q11
    d2 = weight_side.q22 - other_side.q22
    t01 = -(d1 * other_side.q22)
    t10 = -(d2 * other_side.q11)
    dt01, dt10 = t01.deriv(), t10.deriv()

    omega1 = 0.0
    omega2 = 0.0
    for z in zs:
        Qw = weight_side.matrix_at(z)
        F1 = np.array([[0.0, -float(d1(z)) * float(other_side.q22.deriv()(z))],
                       [-float(d2(z)) * float(other_side.q11.deriv()(z)), 0.0]])
        F2 = -np.array([[0.0, float(dt01(z))], [float(dt10(z)), 0.0]])
        w1 = scipy.linalg.eigh(sym(F1), Qw, eigvals_only=True)[-1]
        w2 = scipy.linalg.eigh(sym(F2), Qw, eigvals_only=True)[-1]
        omega1 = max(omega1, float(w1))
        omega2 = max(omega2, float(w2))
    return omega1, omega2


def family_omega(family: FamilySpec) -> float:
    """Growth constant omega with <A(t)x, x>_{Q0} <= omega |x|_{Q0}^2.

    Requires the diagonal ratio conditions and a lossless interface (r = 0)
    with a contraction boundary matrix.  The two-sided constants are
    combined as omega_side = omega1 + omega2/2 (the bound the estimate chain
    actually supports) and inflated by a 1% safety margin.
    """
    profile, bc = family.profile, family.bc
    if not profile.is_diagonal:
        raise AssumptionError("family assumption violated: Q must be diagonal")
    if not profile.ratio_conditions_hold():
        raise AssumptionError("family assumption violated: ratio conditions "
                              "Q11+/Q11-(ref) = 1, Q11+/Q11- = Q22+/Q22- fail")
    if family.r != 0.0:
        raise AssumptionError("family assumption violated: r must be 0")
    eigs = scipy.linalg.eigvalsh(0.5 * (bc.sigma_form + bc.sigma_form.T))
    if not bc.is_valid or eigs[0] < -1e-10 * max(1.0, float(np.max(np.abs(bc.sigma_form)))):
        raise AssumptionError("family assumption violated: need rank 2 and "
                              "W_B Sigma W_B^T >= 0")

    w1m, w2m = _omega_pair(profile.minus, profile.plus, profile.a, profile.b)
    w1p, w2p = _omega_pair(profile.plus, profile.minus, profile.a, profile.b)
    omega = max(w1m + 0.5 * w2m, w1p + 0.5 * w2p, 0.0)
    return 1.01 * omega


def norm_equivalence_bounds(profile: CoefficientProfile):
    return profile.norm_equivalence_bounds()


@dataclass(frozen=True)
class TraceEnergyVerdict:
    passed: bool
    C: float


def trace_energy_bound_check(times, energies, trace_a, trace_b,
                             C_cap: float = 1e6) -> TraceEnergyVerdict:
    """Smallest empirical C with |x(tau)|^2 <= C int (|e(a,t)|^2 + |e(b,t)|^2) dt.

    ``trace_a``/``trace_b`` are arrays of boundary effort traces Q x at the
    ends (shape (nt, 2)); vacuously passes for zero initial energy.
    """
    times = np.asarray(times, dtype=float)
    energies = np.asarray(energies, dtype=float)
    ta = np.asarray(trace_a, dtype=float)
    tb = np.asarray(trace_b, dtype=float)
    integrand = np.sum(ta * ta, axis=1) + np.sum(tb * tb, axis=1)
    denom = float(np.trapezoid(integrand, times))
    final = float(energies[-1])
    if denom == 0.0:
        if final == 0.0:
            return TraceEnergyVerdict(True, 0.0)
        raise ValueError("zero boundary integral with nonzero final energy")
    C = final / denom
    return TraceEnergyVerdict(C < C_cap, C)
