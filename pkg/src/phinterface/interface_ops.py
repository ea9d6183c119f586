"""Interface-aware operators on piecewise fields.

d_l differentiates (as -d/dz) fields that are continuous across the
interface; its formal adjoint d_l* acts as +d/dz on fields that may jump.
The pair satisfies

    <d_l x, y> = -[x y]_a^b + x(l) (y(l+) - y(l-)) + <x, d_l* y>,

which is the computational backbone of the interface Dirac structure.  The
matrix operator J_l = [[0, d_l], [-d_l*, 0]] acts on efforts e = Q_l x and is
formally skew-symmetric up to boundary and interface port terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .boundary import P1, P1_REXT, BoundaryConditionSpec, adjoint_condition_matrix
from .fields import PiecewiseField, gauss_points, poly_from_coeffs
from .profiles import CoefficientProfile

CONTINUITY_RTOL = 1e-10


class DomainViolation(ValueError):
    pass


@dataclass(frozen=True)
class InterfaceSpec:
    """Interface position and passivity constant of the relation f_I = r e_I."""

    l: float
    r: float

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("passivity constant r must be nonnegative")


@dataclass(frozen=True)
class InterfacePorts:
    f_I: float
    e_I: float


def _require_continuity(field: PiecewiseField, comp: int, what: str,
                        rtol: float = CONTINUITY_RTOL):
    gap = abs(float(field.left[comp](field.l)) - float(field.right[comp](field.l)))
    scale = max(field.component(comp).sup_norm(), 1e-30)
    if gap > rtol * scale:
        raise DomainViolation(f"{what} must be continuous at the interface "
                              f"(gap {gap:.3e}, scale {scale:.3e})")


def apply_dl(x: PiecewiseField) -> PiecewiseField:
    """d_l x = -dx/dz per side; x must be continuous across l."""
    if x.ncomp != 1:
        raise ValueError("apply_dl acts on scalar fields")
    _require_continuity(x, 0, "argument of d_l", rtol=1e-12)
    d = x.derivative()
    return d.scaled(-1.0)


def apply_dl_star(y: PiecewiseField) -> PiecewiseField:
    """d_l* y = +dy/dz per side; y may jump at l."""
    if y.ncomp != 1:
        raise ValueError("apply_dl_star acts on scalar fields")
    return y.derivative()


def duality_residual(x: PiecewiseField, y: PiecewiseField) -> float:
    """Residual of the d_l / d_l* integration-by-parts relation."""
    lhs = apply_dl(x).l2_inner(y)
    boundary = float(x.right[0](x.b) * y.right[0](y.b) - x.left[0](x.a) * y.left[0](y.a))
    jump = float(x.left[0](x.l)) * float(y.right[0](y.l) - y.left[0](y.l))
    rhs = x.l2_inner(apply_dl_star(y))
    return abs(lhs + boundary - jump - rhs)


def apply_interface_operator(e: PiecewiseField) -> PiecewiseField:
    """J_l e = (d_l e_2, -d_l* e_1) = P1 de/dz on each side.

    Domain: e_2 continuous at l (e_1 may jump).
    """
    if e.ncomp != 2:
        raise ValueError("J_l acts on two-component fields")
    _require_continuity(e, 1, "second effort component")
    d = e.derivative()
    return PiecewiseField(
        e.a, e.l, e.b,
        (d.left[1] * -1.0, d.left[0] * -1.0),
        (d.right[1] * -1.0, d.right[0] * -1.0),
    )


def interface_ports(e: PiecewiseField, spec: InterfaceSpec) -> InterfacePorts:
    """f_I = e_2(l) (privileged continuous flux), e_I = e_1(l-) - e_1(l+)."""
    _require_continuity(e, 1, "privileged flux e_2")
    f_I = float(e.left[1](e.l))
    e_I = float(e.left[0](e.l) - e.right[0](e.l))
    return InterfacePorts(f_I, e_I)


def effort_boundary_ports(e: PiecewiseField):
    """(f_d, e_d) = R_ext (e(b); e(a)) for a two-component effort field."""
    trace = np.concatenate([e.at_b(), e.at_a()])
    fe = P1_REXT @ trace
    return fe[:2], fe[2:]


def skew_identity_residual(e1: PiecewiseField, e2: PiecewiseField) -> float:
    """Residual of the interface skew-symmetry identity for J_l."""
    Je1 = apply_interface_operator(e1)
    Je2 = apply_interface_operator(e2)
    lhs = Je1.l2_inner(e2) + e1.l2_inner(Je2)

    b_term = float(e1.at_b() @ P1 @ e2.at_b() - e1.at_a() @ P1 @ e2.at_a())
    j1 = float(e1.left[1](e1.l)) * float(e2.right[0](e2.l) - e2.left[0](e2.l))
    j2 = float(e2.left[1](e2.l)) * float(e1.right[0](e1.l) - e1.left[0](e1.l))
    return abs(lhs - b_term - j1 - j2)


def pairing_identity_value(e1: PiecewiseField, e2: PiecewiseField,
                           spec: InterfaceSpec) -> float:
    """<e_d1, f_d2> + <e_d2, f_d1> - f_I1 e_I2 - f_I2 e_I1 (port representation)."""
    f1, ed1 = effort_boundary_ports(e1)
    f2, ed2 = effort_boundary_ports(e2)
    p1 = interface_ports(e1, spec)
    p2 = interface_ports(e2, spec)
    return float(ed1 @ f2 + ed2 @ f1 - p1.f_I * p2.e_I - p2.f_I * p1.e_I)


# -- sampling of generator-domain elements -------------------------------------

@dataclass(frozen=True)
class DomainSample:
    """State x in D(A) (or D(A*)), carried through its effort e = Q_l x.

    The effort is piecewise cubic per side and satisfies the continuity,
    passivity, and boundary constraints of the domain; the state itself is
    x = Q_l^{-1} e, evaluated on demand.
    """

    effort: PiecewiseField
    profile: CoefficientProfile
    interface: InterfaceSpec
    adjoint: bool

    def state_at(self, side: str, z):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        Qinv = self.profile.side(side).inverse(z)
        e = self.effort.eval_side(side, z)
        return np.einsum("ijk,jk->ik", Qinv, e)

    def _segments(self, split_at_reference: bool):
        pts = {self.effort.a, self.effort.l, self.effort.b}
        if split_at_reference:
            ref = self.profile.reference
            if self.effort.a < ref < self.effort.b:
                pts.add(ref)
        pts = sorted(pts)
        return list(zip(pts[:-1], pts[1:]))

    def generator_form(self) -> float:
        """<A x, x>_{Q_l} = 1/2 integral e^T J_l e (exact quadrature)."""
        Je = apply_interface_operator(self.effort)
        return 0.5 * self.effort.l2_inner(Je)

    def norm_sq(self) -> float:
        """|x|_{Q_l}^2 = 1/2 integral e^T Q_l^{-1} e."""
        total = 0.0
        for lo, hi in self._segments(False):
            side = "minus" if hi <= self.effort.l else "plus"
            z, w = gauss_points(lo, hi, 64)
            e = self.effort.eval_side(side, z)
            Qinv = self.profile.side(side).inverse(z)
            total += float(np.sum(w * np.einsum("ik,ijk,jk->k", e, Qinv, e)))
        return 0.5 * total

    def _q0_side(self, z):
        return np.where(np.atleast_1d(z) < self.profile.reference, 0, 1)

    def reference_form(self) -> float:
        """<A x, x>_{Q_0} = 1/2 integral (Q_l^{-1} e)^T Q_0 (J_l e)."""
        Je = apply_interface_operator(self.effort)
        total = 0.0
        for lo, hi in self._segments(True):
            side = "minus" if hi <= self.effort.l else "plus"
            ref_side = "minus" if hi <= self.profile.reference else "plus"
            z, w = gauss_points(lo, hi, 64)
            x = self.state_at(side, z)
            Q0 = self.profile.side(ref_side).matrix(z)
            v = Je.eval_side(side, z)
            total += float(np.sum(w * np.einsum("ik,ijk,jk->k", x, Q0, v)))
        return 0.5 * total

    def reference_norm_sq(self) -> float:
        """|x|_{Q_0}^2 with the reference-interface weight."""
        total = 0.0
        for lo, hi in self._segments(True):
            side = "minus" if hi <= self.effort.l else "plus"
            ref_side = "minus" if hi <= self.profile.reference else "plus"
            z, w = gauss_points(lo, hi, 64)
            x = self.state_at(side, z)
            Q0 = self.profile.side(ref_side).matrix(z)
            total += float(np.sum(w * np.einsum("ik,ijk,jk->k", x, Q0, x)))
        return 0.5 * total

    def ports(self) -> InterfacePorts:
        return interface_ports(self.effort, self.interface)


class InfeasibleConstraints(RuntimeError):
    pass


def sample_domain_element(bc: BoundaryConditionSpec, spec: InterfaceSpec,
                          profile: CoefficientProfile, seed: int = 0,
                          adjoint: bool = False) -> DomainSample:
    """Random effort field in the generator domain (or the adjoint domain).

    The effort e = Q_l x is piecewise cubic per side (16 coefficients in
    local coordinates z - l); four linear constraints are imposed: e_2
    continuity at l, the passivity relation f_I = r e_I (f_I = -r e_I for the
    adjoint), and the two boundary conditions.  The remaining degrees of
    freedom are drawn standard normal from the seed.
    """
    if not bc.is_valid:
        raise ValueError("boundary condition spec is invalid (rank deficient)")
    a, l, b = profile.a, spec.l, profile.b
    # coefficient layout: [left e1 (4), left e2 (4), right e1 (4), right e2 (4)]
    ncoef = 16
    rows = []

    def local_powers(z_local):
        return np.array([z_local ** k for k in range(4)])

    # e_2 continuity at l (local coordinate 0)
    row = np.zeros(ncoef)
    row[4] = 1.0
    row[12] = -1.0
    rows.append(row)

    # passivity: f_I = s*r*e_I, s = -1 for the adjoint domain
    s = -1.0 if adjoint else 1.0
    row = np.zeros(ncoef)
    row[4] = 1.0                       # f_I = e_2(l-)
    row[0] -= s * spec.r               # e_I = e_1(l-) - e_1(l+)
    row[8] += s * spec.r
    rows.append(row)

    # boundary conditions on the trace (e1(b), e2(b), e1(a), e2(a))
    W = adjoint_condition_matrix(bc) if adjoint else bc.WB
    Wt = W @ P1_REXT
    pb = local_powers(b - l)
    pa = local_powers(a - l)
    for i in range(2):
        row = np.zeros(ncoef)
        row[8:12] += Wt[i, 0] * pb     # e1(b): right side
        row[12:16] += Wt[i, 1] * pb    # e2(b)
        row[0:4] += Wt[i, 2] * pa      # e1(a): left side
        row[4:8] += Wt[i, 3] * pa      # e2(a)
        rows.append(row)

    C = np.array(rows)
    N = scipy.linalg.null_space(C)
    if N.shape[1] < ncoef - 4:
        raise InfeasibleConstraints(
            f"constraint system leaves only {N.shape[1]} degrees of freedom")
    rng = np.random.default_rng(seed)
    coeffs = N @ rng.standard_normal(N.shape[1])
    residual = np.max(np.abs(C @ coeffs))
    if residual > 1e-10 * max(1.0, np.max(np.abs(coeffs))):
        raise InfeasibleConstraints(f"constraint residual {residual:.3e}")

    effort = PiecewiseField(
        a, l, b,
        (poly_from_coeffs(coeffs[0:4], shift=l), poly_from_coeffs(coeffs[4:8], shift=l)),
        (poly_from_coeffs(coeffs[8:12], shift=l), poly_from_coeffs(coeffs[12:16], shift=l)),
    )
    return DomainSample(effort, profile, spec, adjoint)


# -- weak transport of the color function --------------------------------------

def color_transport_weak_residual(l_path, l_dot, phi, dphi_dt, a: float, b: float,
                                  tau: float, n: int = 64) -> float:
    """Residual of the distributional transport law of the color function.

    Both sides of the weak identity are evaluated independently on a tensor
    quadrature grid (n time nodes, n space nodes on [a, l(t)] per time node):

        side 1:  -int_0^tau int_a^l(t) dphi/dt dz dt    (weak d/dt c_l)
        side 2:   int_0^tau ldot(t) phi(l(t), t) dt     (weak -ldot d/dz c_l)
    """
    t, wt = gauss_points(0.0, tau, n)
    lt = np.asarray([l_path(ti) for ti in t])
    if np.any(lt <= a) or np.any(lt >= b):
        raise ValueError("interface path leaves (a, b)")

    side1 = 0.0
    for ti, wi, li in zip(t, wt, lt):
        z, wz = gauss_points(a, float(li), n)
        side1 -= wi * float(np.dot(wz, dphi_dt(z, ti)))
    side2 = float(np.sum(wt * np.asarray([l_dot(ti) for ti in t])
                         * np.asarray([phi(float(li), ti) for ti, li in zip(t, lt)])))
    return abs(side1 - side2)
