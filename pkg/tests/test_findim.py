import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phinterface.findim import (BondVector, DimensionError, IsoSystem,
                                LinearSubspace, ResistiveRelation, dirac_check,
                                graph_dirac, iso_simulate, levitated_ball,
                                mass_spring, plus_pairing, resistive_check,
                                separable_dirac)


def bond(f, e):
    return BondVector(np.asarray(f, dtype=float), np.asarray(e, dtype=float))


class TestPlusPairing:
    def test_self_pairing_of_unit_pair(self):
        b = bond([1, 0], [0, 1])
        assert plus_pairing(b, b) == 0.0

    def test_swapped_pair(self):
        assert plus_pairing(bond([1, 0], [0, 1]), bond([0, 1], [1, 0])) == 2.0

    def test_against_summation_loop(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            b1 = bond(rng.standard_normal(4), rng.standard_normal(4))
            b2 = bond(rng.standard_normal(4), rng.standard_normal(4))
            acc = 0.0
            for i in range(4):
                acc += b1.e[i] * b2.f[i]
                acc += b2.e[i] * b1.f[i]
            assert plus_pairing(b1, b2) == pytest.approx(acc, rel=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            plus_pairing(bond([1], [1]), bond([1, 2], [3, 4]))


class TestDiracCheck:
    def test_mass_spring_graph_is_dirac(self):
        J = np.array([[0.0, 1.0], [-1.0, 0.0]])
        assert dirac_check(graph_dirac(J)).is_dirac

    def test_zero_subspace_fails_dimension(self):
        D = LinearSubspace(4, np.zeros((4, 0)))
        v = dirac_check(D)
        assert not v.is_dirac and not v.dim_ok and v.pairing_vanishes

    def test_K_times_Kperp_is_dirac(self):
        rng = np.random.default_rng(7)
        K = rng.standard_normal((3, 2))
        D = separable_dirac(K)
        v = dirac_check(D)
        assert v.is_dirac
        # brute-force orthogonal complement: every basis element of K^perp
        # annihilates every column of K
        basis = D.basis
        for j in range(basis.shape[1]):
            f, e = basis[:3, j], basis[3:, j]
            for jj in range(basis.shape[1]):
                f2, e2 = basis[:3, jj], basis[3:, jj]
                assert abs(e @ f2 + e2 @ f) <= 1e-10

    def test_degenerate_basis_rejected(self):
        cols = np.ones((4, 2))
        with pytest.raises(DimensionError):
            LinearSubspace(4, cols)

    def test_sampled_members_have_zero_pairing(self):
        rng = np.random.default_rng(11)
        J = rng.standard_normal((3, 3))
        J = J - J.T
        D = graph_dirac(J)
        assert dirac_check(D).is_dirac
        for _ in range(1000):
            c1 = rng.standard_normal(3)
            c2 = rng.standard_normal(3)
            v1 = D.basis @ c1
            v2 = D.basis @ c2
            b1 = bond(v1[:3], v1[3:])
            b2 = bond(v2[:3], v2[3:])
            assert abs(plus_pairing(b1, b2)) <= 1e-10 * max(
                1.0, np.max(np.abs(v1)) * np.max(np.abs(v2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=8), st.integers(min_value=0, max_value=10_000))
def test_graph_dirac_property(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    J = A - A.T
    assert dirac_check(graph_dirac(J)).is_dirac


def test_graph_dirac_zero_matrix():
    D = graph_dirac(np.zeros((2, 2)))
    expect = np.vstack([np.zeros((2, 2)), np.eye(2)])
    assert np.allclose(D.basis, expect)


def test_graph_dirac_rejects_non_skew():
    with pytest.raises(ValueError):
        graph_dirac(np.eye(2))


class TestSeparable:
    def test_transformer(self):
        K = np.array([[1.0], [2.0]])
        D = separable_dirac(K)
        assert dirac_check(D).is_dirac
        # K^perp must be the span of (-2, 1)
        e = D.basis[2:, 1]
        assert abs(e @ np.array([1.0, 2.0])) <= 1e-12
        assert abs(abs(e @ np.array([-2.0, 1.0])) - np.linalg.norm(e) * np.sqrt(5)) <= 1e-12

    def test_full_space(self):
        D = separable_dirac(np.eye(3))
        assert D.dim == 3 and dirac_check(D).is_dirac

    def test_separability_on_sampled_pairs(self):
        rng = np.random.default_rng(5)
        K = rng.standard_normal((5, 2))
        D = separable_dirac(K)
        n = 5
        for _ in range(50):
            v1 = D.basis @ rng.standard_normal(D.dim)
            v2 = D.basis @ rng.standard_normal(D.dim)
            assert abs(v1[n:] @ v2[:n]) <= 1e-10  # <e1 | f2> = 0


class TestResistive:
    def test_unit_damper(self):
        v = resistive_check(ResistiveRelation(np.eye(1), np.array([[1.0]])))
        assert v.passed and v.max_sampled_power <= 0.0

    def test_zero_flow_relation(self):
        assert resistive_check(ResistiveRelation(np.eye(2), np.zeros((2, 2)))).passed

    def test_rank_deficient_pair_flagged(self):
        Rf = np.array([[1.0, 0.0], [1.0, 0.0]])
        Re = np.array([[0.0, 1.0], [0.0, 1.0]])
        # rows are repeated, so [Rf Re] has rank 1 < 2
        v = resistive_check(ResistiveRelation(Rf, Re))
        assert not v.passed and not v.full_rank


class TestIsoSimulate:
    def test_mass_spring_conserves_energy(self):
        sys = mass_spring(m=1.0, k=1.0)
        traj = iso_simulate(sys, [1.0, 0.0], None, dt=1e-2, t_end=10.0)
        assert np.max(np.abs(traj.H - traj.H[0])) <= 1e-10
        assert traj.passivity_ok

    def test_levitated_ball_passivity(self):
        sys = levitated_ball()
        u = lambda t: np.array([0.5 * np.sin(2 * t)])
        traj = iso_simulate(sys, [0.2, 0.0, 0.3], u, dt=1e-2, t_end=2.0)
        assert traj.passivity_ok
        # dH <= V.I per step, accumulated: H(t) - H(0) <= supplied + tol
        gaps = (traj.H - traj.H[0]) - traj.supplied_power
        assert np.max(gaps) <= 1e-6 * (1 + np.max(np.abs(traj.H)))

    def test_equilibrium_stays_zero(self):
        sys = mass_spring()
        traj = iso_simulate(sys, [0.0, 0.0], None, dt=1e-2, t_end=1.0)
        assert np.max(np.abs(traj.x)) == 0.0

    def test_gradient_consistency_guard(self):
        bad = IsoSystem(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 1)),
                        gradH=lambda x: 2 * x, H=lambda x: float(x @ x))
        # H = |x|^2 has gradient 2x, consistent; a wrong gradient must raise
        iso_simulate(bad, np.array([1.0, 1.0]), None, dt=0.1, t_end=0.2)
        worse = IsoSystem(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 1)),
                          gradH=lambda x: 3 * x, H=lambda x: float(x @ x))
        with pytest.raises(ValueError):
            iso_simulate(worse, np.array([1.0, 1.0]), None, dt=0.1, t_end=0.2)

    def test_nonquadratic_conservation(self):
        # R = 0, u = 0, quartic Hamiltonian: tolerance 1e-6 at dt = 1e-3
        sys = IsoSystem(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.zeros((2, 2)),
                        np.zeros((2, 1)),
                        gradH=lambda x: x + x ** 3,
                        H=lambda x: float(0.5 * x @ x + 0.25 * np.sum(x ** 4)))
        traj = iso_simulate(sys, [0.8, 0.1], None, dt=1e-3, t_end=1.0)
        assert np.max(np.abs(traj.H - traj.H[0])) <= 1e-6

    def test_gradient_fd_property(self):
        sys = levitated_ball()
        rng = np.random.default_rng(1)
        h = 1e-6
        for _ in range(100):
            x = rng.standard_normal(3)
            g = sys.gradH(x)
            for i in range(3):
                dx = np.zeros(3)
                dx[i] = h
                fd = (sys.H(x + dx) - sys.H(x - dx)) / (2 * h)
                assert abs(fd - g[i]) <= 1e-5 * max(1.0, abs(g[i]))


def test_midpoint_divergence_reports_step():
    from phinterface.findim import MidpointDivergence
    stiff = IsoSystem(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.zeros((2, 2)),
                      np.zeros((2, 1)),
                      gradH=lambda x: x + 100 * x ** 3,
                      H=lambda x: float(0.5 * x @ x + 25 * np.sum(x ** 4)))
    with pytest.raises(MidpointDivergence) as err:
        iso_simulate(stiff, [2.0, 0.0], None, dt=0.5, t_end=2.0, newton_maxit=2)
    assert err.value.step >= 0
