"""Coercive coefficient profiles Q_l = c_l Q^- + cbar_l Q^+.

Each side carries a symmetric positive definite 2x2 matrix function of z
with polynomial entries; the coercivity window [m, M] is certified by
sampling eigenvalues at 64 points per side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .fields import poly_from_coeffs

SAMPLE_POINTS = 64


def _as_poly(v):
    if isinstance(v, Polynomial):
        return v
    return poly_from_coeffs(np.atleast_1d(v))


@dataclass(frozen=True, eq=False)
class SideProfile:
    """One side's Q(z) with polynomial entries (q12 = 0 for diagonal)."""

    q11: Polynomial
    q12: Polynomial
    q22: Polynomial

    @staticmethod
    def constant(q11: float, q22: float, q12: float = 0.0) -> "SideProfile":
        return SideProfile(_as_poly(q11), _as_poly(q12), _as_poly(q22))

    @staticmethod
    def diagonal_poly(q11_coeffs, q22_coeffs) -> "SideProfile":
        return SideProfile(_as_poly(q11_coeffs), _as_poly(0.0), _as_poly(q22_coeffs))

    @property
    def is_diagonal(self) -> bool:
        return np.max(np.abs(self.q12.coef), initial=0.0) == 0.0

    @property
    def is_constant(self) -> bool:
        return all(p.degree() == 0 or np.max(np.abs(p.coef[1:]), initial=0.0) == 0.0
                   for p in (self.q11, self.q12, self.q22))

    def matrix(self, z):
        """Q(z) with shape (2, 2, npts)."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        q11, q12, q22 = (np.broadcast_to(np.asarray(p(z), dtype=float), z.shape)
                         for p in (self.q11, self.q12, self.q22))
        return np.array([[q11, q12], [q12, q22]])

    def matrix_at(self, z: float) -> np.ndarray:
        return self.matrix(z)[:, :, 0]

    def derivative_at(self, z: float) -> np.ndarray:
        d11, d12, d22 = (float(p.deriv()(z)) for p in (self.q11, self.q12, self.q22))
        return np.array([[d11, d12], [d12, d22]])

    def inverse(self, z):
        """Q(z)^-1 with shape (2, 2, npts)."""
        Q = self.matrix(z)
        det = Q[0, 0] * Q[1, 1] - Q[0, 1] * Q[1, 0]
        return np.array([[Q[1, 1] / det, -Q[0, 1] / det],
                         [-Q[1, 0] / det, Q[0, 0] / det]])


@dataclass(frozen=True, eq=False)
class CoefficientProfile:
    """Side profiles together with certified coercivity bounds m, M.

    ``reference`` is the interface position defining the fixed comparison
    weight Q_0 used for norm equivalence and the moving-interface bounds.
    """

    minus: SideProfile
    plus: SideProfile
    a: float
    b: float
    m: float
    M: float
    reference: float = 0.0

    @staticmethod
    def build(minus: SideProfile, plus: SideProfile, a: float, b: float,
              reference: float = 0.0) -> "CoefficientProfile":
        zs = np.linspace(a, b, SAMPLE_POINTS)
        lo, hi = np.inf, -np.inf
        for side in (minus, plus):
            Q = side.matrix(zs)  # (2,2,n)
            tr = Q[0, 0] + Q[1, 1]
            det = Q[0, 0] * Q[1, 1] - Q[0, 1] * Q[1, 0]
            disc = np.sqrt(np.maximum(tr * tr / 4 - det, 0.0))
            lam_min, lam_max = tr / 2 - disc, tr / 2 + disc
            if np.min(lam_min) <= 0:
                raise ValueError("side profile is not positive definite on [a, b]")
            lo = min(lo, float(np.min(lam_min)))
            hi = max(hi, float(np.max(lam_max)))
        return CoefficientProfile(minus, plus, a, b, lo, hi, reference)

    @property
    def is_diagonal(self) -> bool:
        return self.minus.is_diagonal and self.plus.is_diagonal

    @property
    def is_constant(self) -> bool:
        return self.minus.is_constant and self.plus.is_constant

    def side(self, which: str) -> SideProfile:
        return self.minus if which == "minus" else self.plus

    def weight_at(self, l: float):
        """Q_l as a weight callable for PiecewiseField.weighted_inner."""
        def weight(side, z):
            return self.side(side).matrix(z)
        return weight

    def reference_weight(self):
        """Q at the reference interface, independent of the current l."""
        ref = self.reference

        def weight(_side, z):
            z = np.atleast_1d(np.asarray(z, dtype=float))
            Qm = self.minus.matrix(z)
            Qp = self.plus.matrix(z)
            return np.where(z < ref, Qm, Qp)
        return weight

    def norm_equivalence_bounds(self):
        """(m/M, M/m): constants for |x|_{Q_l}^2 relative to |x|_{Q_0}^2."""
        return self.m / self.M, self.M / self.m

    def ratio_conditions_hold(self, tol: float = 1e-10, points: int = 128) -> bool:
        """Diagonal, C1, Q11+/Q11-(ref) = 1 and Q11+/Q11- = Q22+/Q22- on [a,b]."""
        if not self.is_diagonal:
            return False
        zs = np.linspace(self.a, self.b, points)
        r11 = np.asarray(self.plus.q11(zs)) / np.asarray(self.minus.q11(zs))
        r22 = np.asarray(self.plus.q22(zs)) / np.asarray(self.minus.q22(zs))
        at_ref = float(self.plus.q11(self.reference) / self.minus.q11(self.reference))
        return bool(np.max(np.abs(r11 - r22)) <= tol and abs(at_ref - 1.0) <= tol)


def identity_profile(a: float, b: float) -> CoefficientProfile:
    return CoefficientProfile.build(SideProfile.constant(1.0, 1.0),
                                    SideProfile.constant(1.0, 1.0), a, b)


def transmission_line_profile(a: float, b: float, C_minus: float, L_minus: float,
                              C_plus: float, L_plus: float) -> CoefficientProfile:
    """Two lossless line segments: Q = diag(1/C, 1/L) per side."""
    return CoefficientProfile.build(
        SideProfile.constant(1.0 / C_minus, 1.0 / L_minus),
        SideProfile.constant(1.0 / C_plus, 1.0 / L_plus), a, b)
