"""Piecewise fields on [a, b] with a distinguished point l where values may jump.

A field is stored per subdomain [a, l] / [l, b] as one polynomial per
component (numpy ``Polynomial`` or ``Chebyshev`` objects, evaluated in the
global coordinate z).  One-sided limits at l are plain polynomial
evaluations, so jump quantities are exact.  Inner products are computed with
Gauss-Legendre quadrature per side; with the default 16 nodes they are exact
for integrands of polynomial degree up to 31.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial

GAUSS_NODES = 16


@lru_cache(maxsize=64)
def _gauss_ref(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def gauss_points(lo: float, hi: float, n: int = GAUSS_NODES):
    """Gauss-Legendre nodes and weights on [lo, hi]."""
    x, w = _gauss_ref(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def integrate(f, lo: float, hi: float, n: int = GAUSS_NODES) -> float:
    z, w = gauss_points(lo, hi, n)
    return float(np.dot(w, f(z)))


def poly_from_coeffs(coeffs, shift: float = 0.0):
    """Polynomial sum_k c_k (z - shift)^k in the global coordinate z."""
    p = Polynomial(np.atleast_1d(np.asarray(coeffs, dtype=float)))
    if shift == 0.0:
        return p
    return p(Polynomial([-shift, 1.0]))


def fit_polynomial(f, lo: float, hi: float, deg: int):
    """Chebyshev interpolant of a smooth callable; stable up to high degree."""
    return Chebyshev.interpolate(f, deg, domain=[lo, hi])


@dataclass(frozen=True, eq=False)
class PiecewiseField:
    """Vector field on [a,b], polynomial on each side of the interface at l."""

    a: float
    l: float
    b: float
    left: tuple
    right: tuple

    def __post_init__(self):
        if not (self.a < self.l < self.b):
            raise ValueError(f"need a < l < b, got a={self.a}, l={self.l}, b={self.b}")
        if len(self.left) != len(self.right):
            raise ValueError("left/right component counts differ")

    @property
    def ncomp(self) -> int:
        return len(self.left)

    # -- evaluation ---------------------------------------------------------

    def eval_side(self, side: str, z):
        polys = self.left if side == "minus" else self.right
        z = np.asarray(z, dtype=float)
        return np.stack([np.asarray(p(z), dtype=float) for p in polys])

    def __call__(self, z):
        """Pointwise values; at z == l the left branch is used."""
        z = np.asarray(z, dtype=float)
        lv = self.eval_side("minus", z)
        rv = self.eval_side("plus", z)
        return np.where(z <= self.l, lv, rv)

    def at_l_minus(self):
        return np.array([float(p(self.l)) for p in self.left])

    def at_l_plus(self):
        return np.array([float(p(self.l)) for p in self.right])

    def at_a(self):
        return np.array([float(p(self.a)) for p in self.left])

    def at_b(self):
        return np.array([float(p(self.b)) for p in self.right])

    def jump_at_l(self):
        return self.at_l_plus() - self.at_l_minus()

    # -- calculus / algebra -------------------------------------------------

    def derivative(self) -> "PiecewiseField":
        return PiecewiseField(
            self.a, self.l, self.b,
            tuple(p.deriv() for p in self.left),
            tuple(p.deriv() for p in self.right),
        )

    def component(self, i: int) -> "PiecewiseField":
        return PiecewiseField(self.a, self.l, self.b, (self.left[i],), (self.right[i],))

    def scaled(self, c: float) -> "PiecewiseField":
        return PiecewiseField(
            self.a, self.l, self.b,
            tuple(p * c for p in self.left),
            tuple(p * c for p in self.right),
        )

    # -- norms and inner products -------------------------------------------

    def l2_inner(self, other: "PiecewiseField", n: int = GAUSS_NODES) -> float:
        """Componentwise L2 inner product over [a,b], side by side."""
        total = 0.0
        for side, lo, hi in (("minus", self.a, self.l), ("plus", self.l, self.b)):
            z, w = gauss_points(lo, hi, n)
            total += float(np.sum(w * np.sum(
                self.eval_side(side, z) * other.eval_side(side, z), axis=0)))
        return total

    def weighted_inner(self, other: "PiecewiseField", weight, n: int = GAUSS_NODES) -> float:
        """1/2 * integral of self^T W(z) other with W = weight(side, z) -> (2,2,npts)."""
        total = 0.0
        for side, lo, hi in (("minus", self.a, self.l), ("plus", self.l, self.b)):
            z, w = gauss_points(lo, hi, n)
            u = self.eval_side(side, z)
            v = other.eval_side(side, z)
            W = weight(side, z)
            total += float(np.sum(w * np.einsum("ik,ijk,jk->k", u, W, v)))
        return 0.5 * total

    def sup_norm(self, samples: int = 257) -> float:
        zl = np.linspace(self.a, self.l, samples)
        zr = np.linspace(self.l, self.b, samples)
        return max(
            float(np.max(np.abs(self.eval_side("minus", zl)))),
            float(np.max(np.abs(self.eval_side("plus", zr)))),
        )

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def from_coeff_lists(a, l, b, left_coeffs, right_coeffs, coordinates: str = "z"):
        """Build from per-side, per-component coefficient lists (ascending degree).

        ``coordinates`` selects the local variable the coefficients refer to:
        "z" (global), "z-l", or "z-a".
        """
        if coordinates == "z":
            shift = 0.0
        elif coordinates == "z-l":
            shift = l
        elif coordinates == "z-a":
            shift = a
        else:
            raise ValueError(f"unknown coordinates {coordinates!r}")
        return PiecewiseField(
            a, l, b,
            tuple(poly_from_coeffs(c, shift) for c in left_coeffs),
            tuple(poly_from_coeffs(c, shift) for c in right_coeffs),
        )

    @staticmethod
    def from_samples(a, l, b, z_left, vals_left, z_right, vals_right, deg: int = 8,
                     tol: float = 1e-8):
        """Least-squares polynomial fit of per-side grid samples.

        The conversion tolerance is checked against the sample values: the
        maximum pointwise fit residual must stay below tol * max|values|.
        """
        def fit_side(zs, vals):
            zs = np.asarray(zs, dtype=float)
            vals = np.atleast_2d(np.asarray(vals, dtype=float))
            polys = []
            scale = max(np.max(np.abs(vals)), 1e-300)
            for comp in vals:
                d = min(deg, len(zs) - 1)
                p = Polynomial.fit(zs, comp, d)
                if np.max(np.abs(p(zs) - comp)) > tol * scale:
                    raise ValueError("grid-to-polynomial conversion exceeds tolerance")
                polys.append(p)
            return tuple(polys)

        return PiecewiseField(a, l, b, fit_side(z_left, vals_left),
                              fit_side(z_right, vals_right))

    @staticmethod
    def random_polynomial(a, l, b, ncomp: int, deg: int, rng) -> "PiecewiseField":
        """Independent random polynomials per side and component (coeffs ~ N(0,1))."""
        def side():
            return tuple(poly_from_coeffs(rng.standard_normal(deg + 1)) for _ in range(ncomp))
        return PiecewiseField(a, l, b, side(), side())

    def with_continuous_component(self, i: int) -> "PiecewiseField":
        """Shift the right branch of component i so it matches the left limit at l."""
        gap = float(self.left[i](self.l)) - float(self.right[i](self.l))
        right = list(self.right)
        right[i] = right[i] + gap
        return PiecewiseField(self.a, self.l, self.b, self.left, tuple(right))
