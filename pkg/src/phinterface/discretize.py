"""Energy-consistent staggered discretization of the interface operator.

Layout: x1 at cell centers, x2 at nodes, separately per side.  The interface
node carries one degree of freedom per side; the pair is tied by continuity
of the privileged effort e2 = Q22 x2 and merged into a single retained dof
whose update is the flux balance of the merged half-cell control volume

    [(h-/2) + kappa (h+/2)] dw/dt = e1(c_last^-) - e1(c_first^+) - e_I,

with e_I = f_I / r supplied by the passivity relation.  Boundary conditions
are closed by ghost effort values e1(a), e1(b) solved from the condition
matrix itself; rank-deficient closures (conditions that constrain only the
e2 traces) eliminate boundary node dofs by exact substitution.  With these
rules the semi-discrete energy identity

    d/dt H_h = <e_d, f_d> - e_I f_I

telescopes exactly, with no artificial dissipation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .boundary import P1_REXT, BoundaryConditionSpec
from .fields import PiecewiseField
from .interface_ops import InterfaceSpec
from .profiles import CoefficientProfile


class ClosureError(RuntimeError):
    pass


@dataclass(frozen=True)
class StaggeredGrid:
    a: float
    b: float
    l: float
    N_minus: int
    N_plus: int

    def __post_init__(self):
        if self.N_minus < 4 or self.N_plus < 4:
            raise ValueError("cell counts must be at least 4 per side")
        if self.h_minus < 1e-12 or self.h_plus < 1e-12:
            raise ValueError("cell width below 1e-12; interface too close to a boundary")

    @property
    def h_minus(self) -> float:
        return (self.l - self.a) / self.N_minus

    @property
    def h_plus(self) -> float:
        return (self.b - self.l) / self.N_plus

    @property
    def centers_minus(self) -> np.ndarray:
        return self.a + (np.arange(self.N_minus) + 0.5) * self.h_minus

    @property
    def centers_plus(self) -> np.ndarray:
        return self.l + (np.arange(self.N_plus) + 0.5) * self.h_plus

    @property
    def nodes_minus(self) -> np.ndarray:
        return self.a + np.arange(self.N_minus + 1) * self.h_minus

    @property
    def nodes_plus(self) -> np.ndarray:
        return self.l + np.arange(self.N_plus + 1) * self.h_plus


def build_grid(a: float, b: float, l: float, N_minus: int, N_plus: int) -> StaggeredGrid:
    if not (a < l < b):
        raise ValueError("need a < l < b")
    return StaggeredGrid(a, b, l, N_minus, N_plus)


@dataclass
class DiscreteGenerator:
    A: scipy.sparse.csr_matrix
    mass: np.ndarray
    grid: StaggeredGrid
    profile: CoefficientProfile
    bc: BoundaryConditionSpec
    interface: InterfaceSpec
    Z: scipy.sparse.csr_matrix          # reduced -> full state
    keep: np.ndarray                    # retained full indices
    trace_map: np.ndarray               # (4, nred): (e1(b), e2(b), e1(a), e2(a))
    port_map: np.ndarray                # (4, nred): (f_d; e_d)
    fI_map: np.ndarray
    eI_map: np.ndarray
    dof_positions: np.ndarray
    dof_component: np.ndarray           # 1 or 2
    dof_side: np.ndarray                # 0 = minus, 1 = plus
    source_rules: dict                  # merged dofs: red idx -> [(side, z, weight)]

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def energy(self, u: np.ndarray) -> float:
        return 0.5 * float(u @ (self.mass * u))

    def energy_gradient(self, u: np.ndarray) -> np.ndarray:
        return self.mass * u

    def ports(self, u: np.ndarray):
        fe = self.port_map @ u
        return fe[:2], fe[2:], float(self.fI_map @ u), float(self.eI_map @ u)

    def boundary_power(self, u: np.ndarray) -> float:
        fd, ed, fI, eI = self.ports(u)
        return float(ed @ fd) - eI * fI

    def full_state(self, u: np.ndarray) -> np.ndarray:
        return self.Z @ u

    def inject(self, x: PiecewiseField) -> np.ndarray:
        """Sample a piecewise field at the retained dof positions."""
        u = np.empty(self.n)
        for i, (z, comp, side) in enumerate(zip(self.dof_positions,
                                                self.dof_component, self.dof_side)):
            vals = x.eval_side("minus" if side == 0 else "plus", float(z))
            u[i] = float(vals[comp - 1])
        return u

    def inject_source(self, y: PiecewiseField) -> np.ndarray:
        """Sample a source term consistently with the generator rows.

        Pointwise sampling everywhere, except at merged control-volume dofs
        (the interface pair, cross-boundary pairs) where the consistent value
        is the flux-balance weighted average of the two one-sided samples.
        """
        u = self.inject(y)
        for k, contribs in self.source_rules.items():
            u[k] = sum(wgt * float(y.eval_side(side, z)[1])
                       for side, z, wgt in contribs)
        return u

    def reference_norm_sq(self, u: np.ndarray) -> float:
        """|x_h|^2 in the discrete Q_0 (reference-interface) inner product."""
        full = self.Z @ u
        w = _quadrature_weights(self.grid)
        q0 = _q0_values(self.grid, self.profile)
        return 0.5 * float(np.sum(w * q0 * full * full))

    def dump_triplets(self, path):
        """Coordinate triplet text dump: row, col, value per line."""
        coo = self.A.tocoo()
        with open(path, "w", encoding="ascii") as fh:
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r} {c} {v:.17e}\n")


def _full_layout(grid: StaggeredGrid):
    Nm, Np = grid.N_minus, grid.N_plus
    x1m = np.arange(Nm)
    x1p = Nm + np.arange(Np)
    x2m = Nm + Np + np.arange(Nm + 1)
    x2p = Nm + Np + Nm + 1 + np.arange(Np + 1)
    nfull = Nm + Np + Nm + 1 + Np + 1
    return x1m, x1p, x2m, x2p, nfull


def _quadrature_weights(grid: StaggeredGrid) -> np.ndarray:
    """Trapezoid-style weights per full dof (centers h, nodes h, ends h/2)."""
    x1m, x1p, x2m, x2p, nfull = _full_layout(grid)
    w = np.zeros(nfull)
    w[x1m] = grid.h_minus
    w[x1p] = grid.h_plus
    w[x2m] = grid.h_minus
    w[x2m[0]] = w[x2m[-1]] = grid.h_minus / 2
    w[x2p] = grid.h_plus
    w[x2p[0]] = w[x2p[-1]] = grid.h_plus / 2
    return w


def _q_values(grid: StaggeredGrid, profile: CoefficientProfile):
    ones_cm = np.ones(grid.N_minus)
    ones_cp = np.ones(grid.N_plus)
    ones_nm = np.ones(grid.N_minus + 1)
    ones_np_ = np.ones(grid.N_plus + 1)
    q11m = np.asarray(profile.minus.q11(grid.centers_minus), dtype=float) * ones_cm
    q11p = np.asarray(profile.plus.q11(grid.centers_plus), dtype=float) * ones_cp
    q22m = np.asarray(profile.minus.q22(grid.nodes_minus), dtype=float) * ones_nm
    q22p = np.asarray(profile.plus.q22(grid.nodes_plus), dtype=float) * ones_np_
    return q11m, q11p, q22m, q22p


def _q0_values(grid: StaggeredGrid, profile: CoefficientProfile) -> np.ndarray:
    """Reference-interface diagonal Q values at every full dof."""
    x1m, x1p, x2m, x2p, nfull = _full_layout(grid)
    ref = profile.reference
    q = np.zeros(nfull)

    def pick(poly_m, poly_p, zs):
        return np.where(zs < ref,
                        np.asarray(poly_m(zs), dtype=float) * np.ones(zs.size),
                        np.asarray(poly_p(zs), dtype=float) * np.ones(zs.size))

    q[x1m] = pick(profile.minus.q11, profile.plus.q11, grid.centers_minus)
    q[x1p] = pick(profile.minus.q11, profile.plus.q11, grid.centers_plus)
    q[x2m] = pick(profile.minus.q22, profile.plus.q22, grid.nodes_minus)
    q[x2p] = pick(profile.minus.q22, profile.plus.q22, grid.nodes_plus)
    return q


def assemble_generator(grid: StaggeredGrid, profile: CoefficientProfile,
                       bc: BoundaryConditionSpec,
                       interface: InterfaceSpec) -> DiscreteGenerator:
    """Assemble the reduced generator matrix with exact energy closure."""
    if not bc.is_valid:
        raise ValueError("boundary condition spec is invalid")
    if not profile.is_diagonal:
        raise ValueError("the staggered discretization requires diagonal Q "
                         "(the diagonal mass matrix ties one Q value to each dof)")
    if abs(grid.l - interface.l) > 1e-12:
        raise ValueError("grid interface and interface spec disagree")

    Nm, Np = grid.N_minus, grid.N_plus
    hm, hp = grid.h_minus, grid.h_plus
    x1m, x1p, x2m, x2p, nfull = _full_layout(grid)
    q11m, q11p, q22m, q22p = _q_values(grid, profile)
    r = interface.r

    q22m_l = float(profile.minus.q22(grid.l))
    q22p_l = float(profile.plus.q22(grid.l))
    kappa = q22m_l / q22p_l
    q22_b, q22_a = q22p[-1], q22m[0]

    def unit(idx, coeff=1.0):
        row = np.zeros(nfull)
        row[idx] = coeff
        return row

    e1_first_m = unit(x1m[0], q11m[0])
    e1_last_m = unit(x1m[-1], q11m[-1])
    e1_first_p = unit(x1p[0], q11p[0])
    e1_last_p = unit(x1p[-1], q11p[-1])
    e2_b_row = unit(x2p[-1], q22_b)
    e2_a_row = unit(x2m[0], q22_a)

    # second-order one-sided extrapolations of e1 to the domain ends and the
    # interface, used for ghost reporting and rank-deficient closures
    ext_e1_a = 1.5 * e1_first_m - 0.5 * unit(x1m[1], q11m[1])
    ext_e1_b = 1.5 * e1_last_p - 0.5 * unit(x1p[-2], q11p[-2])
    ext_e1_lm = 1.5 * e1_last_m - 0.5 * unit(x1m[-2], q11m[-2])
    ext_e1_lp = 1.5 * e1_first_p - 0.5 * unit(x1p[1], q11p[1])

    # --- eliminations: full dof -> linear combination of retained dofs -------
    subs: dict[int, dict[int, float]] = {}
    if r > 0:
        subs[x2p[0]] = {x2m[-1]: kappa}
    else:
        subs[x2m[-1]] = {}
        subs[x2p[0]] = {}

    # --- boundary closure -----------------------------------------------------
    # condition on traces: Wt (e1(b), e2(b), e1(a), e2(a)) = 0
    Wt = bc.WB @ P1_REXT
    G = Wt[:, [0, 2]]       # ghost columns e1(b), e1(a)
    Kmat = Wt[:, [1, 3]]    # state columns e2(b), e2(a)
    svals = scipy.linalg.svdvals(G)
    gtol = 1e-10 * max(float(np.max(np.abs(Wt))), 1.0)
    rank_G = int(np.sum(svals > gtol))

    boundary_merge = None  # ("a" or "b" retained, gamma)
    if rank_G == 2:
        Gm = -np.linalg.solve(G, Kmat)  # (g_b, g_a) = Gm (e2(b), e2(a))
        gb_row = Gm[0, 0] * e2_b_row + Gm[0, 1] * e2_a_row
        ga_row = Gm[1, 0] * e2_b_row + Gm[1, 1] * e2_a_row
    elif rank_G == 1:
        U, sv, Vt = np.linalg.svd(G)
        u0 = U[:, 1]                       # left null vector of G
        cvec = u0 @ Kmat                   # constraint cvec . (e2(b), e2(a)) = 0
        c_b = cvec[0] * q22_b              # acting on x2(b)
        c_a = cvec[1] * q22_a              # acting on x2(a)
        if max(abs(c_b), abs(c_a)) <= gtol:
            raise ClosureError("degenerate boundary condition rows")
        if abs(c_b) >= abs(c_a):
            gamma = -c_a / c_b
            if abs(gamma) <= 1e-14:
                subs[x2p[-1]] = {}
            else:
                subs[x2p[-1]] = {x2m[0]: gamma}
                boundary_merge = ("a", gamma)
        else:
            gamma = -c_b / c_a
            if abs(gamma) <= 1e-14:
                subs[x2m[0]] = {}
            else:
                subs[x2m[0]] = {x2p[-1]: gamma}
                boundary_merge = ("b", gamma)
        # ghosts: particular solution of G g = -K e2tr plus the free null
        # direction, fitted to the one-sided extrapolations (accuracy only;
        # the energy identity holds for any choice on ker(G))
        Gpinv = Vt.T[:, :1] @ np.array([[1.0 / sv[0]]]) @ U[:, :1].T
        base = -Gpinv @ Kmat               # (2,2) acting on e2 traces
        ndir = Vt[1, :]                    # null direction of G
        base_rows = np.array([base[0, 0] * e2_b_row + base[0, 1] * e2_a_row,
                              base[1, 0] * e2_b_row + base[1, 1] * e2_a_row])
        # least squares: minimize |base + t*ndir - ext|^2 -> t = ndir.(ext-base)
        t_row = ndir[0] * (ext_e1_b - base_rows[0]) + ndir[1] * (ext_e1_a - base_rows[1])
        gb_row = base_rows[0] + ndir[0] * t_row
        ga_row = base_rows[1] + ndir[1] * t_row
    else:
        # both rows constrain the e2 traces only: e2(b) = e2(a) = 0
        if np.linalg.matrix_rank(Kmat, tol=gtol) < 2:
            raise ClosureError("boundary condition matrix is degenerate")
        subs[x2p[-1]] = {}
        subs[x2m[0]] = {}
        gb_row = ext_e1_b
        ga_row = ext_e1_a

    # --- build substitution matrix --------------------------------------------
    eliminated = set(subs.keys())
    keep = np.array([i for i in range(nfull) if i not in eliminated])
    nred = keep.size
    red_index = {full: k for k, full in enumerate(keep)}

    Z = scipy.sparse.lil_matrix((nfull, nred))
    for k, full in enumerate(keep):
        Z[full, k] = 1.0
    for full, combo in subs.items():
        for ref, coeff in combo.items():
            Z[full, red_index[ref]] = coeff
    Z = Z.tocsr()

    # --- mass (diagonal, substitution-weighted) --------------------------------
    w = _quadrature_weights(grid)
    qdiag = np.zeros(nfull)
    qdiag[x1m], qdiag[x1p] = q11m, q11p
    qdiag[x2m], qdiag[x2p] = q22m, q22p
    mass_full = w * qdiag
    mass = mass_full[keep].copy()
    for full, combo in subs.items():
        for ref, coeff in combo.items():
            mass[red_index[ref]] += coeff ** 2 * mass_full[full]

    # --- assemble rows ----------------------------------------------------------
    set_x1m, set_x1p = set(x1m.tolist()), set(x1p.tolist())
    set_x2m = set(x2m.tolist())
    rows = np.zeros((nred, nfull))

    def node_rule(full):
        """Energy-exact update row for a retained x2 dof (nfull vector)."""
        if full == x2m[-1]:  # interface merged volume (r > 0 only)
            D = hm / 2 + kappa * hp / 2
            row = (e1_last_m - e1_first_p) / D
            row[x2m[-1]] -= q22m_l / (r * D)   # - e_I = - f_I / r
            return row
        if full in set_x2m:
            j = int(full - x2m[0])
            if j == 0:
                if boundary_merge is not None and boundary_merge[0] == "a":
                    # merged with the eliminated partner x2(b) = gamma * x2(a)
                    gamma = boundary_merge[1]
                    m_w = (hm / 2) * q22_a + (hp / 2) * q22_b * gamma ** 2
                    return (q22_a * (ga_row - e1_first_m)
                            + gamma * q22_b * (e1_last_p - gb_row)) / m_w
                return (ga_row - e1_first_m) / (hm / 2)
            row = np.zeros(nfull)
            row[x1m[j]] = -q11m[j] / hm
            row[x1m[j - 1]] = q11m[j - 1] / hm
            return row
        j = int(full - x2p[0])
        if j == Np:
            if boundary_merge is not None and boundary_merge[0] == "b":
                gamma = boundary_merge[1]
                m_w = (hp / 2) * q22_b + (hm / 2) * q22_a * gamma ** 2
                return (q22_b * (e1_last_p - gb_row)
                        + gamma * q22_a * (ga_row - e1_first_m)) / m_w
            return (e1_last_p - gb_row) / (hp / 2)
        row = np.zeros(nfull)
        row[x1p[j]] = -q11p[j] / hp
        row[x1p[j - 1]] = q11p[j - 1] / hp
        return row

    for k, full in enumerate(keep):
        if full in set_x1m:
            i = int(full)
            rows[k, x2m[i + 1]] = -q22m[i + 1] / hm
            rows[k, x2m[i]] = q22m[i] / hm
        elif full in set_x1p:
            i = int(full - Nm)
            rows[k, x2p[i + 1]] = -q22p[i + 1] / hp
            rows[k, x2p[i]] = q22p[i] / hp
        else:
            rows[k] = node_rule(int(full))

    A_red = (Z.T @ rows.T).T
    A = scipy.sparse.csr_matrix(A_red)

    # --- port extraction --------------------------------------------------------
    def reduce_row(row):
        return np.asarray(Z.T @ row).ravel()

    trace_map = np.vstack([reduce_row(gb_row), reduce_row(e2_b_row),
                           reduce_row(ga_row), reduce_row(e2_a_row)])
    port_map = P1_REXT @ trace_map
    if r > 0:
        fI_full = unit(x2m[-1], q22m_l)
        fI_map = reduce_row(fI_full)
        eI_map = fI_map / r
    else:
        fI_map = np.zeros(nred)
        eI_map = reduce_row(ext_e1_lm - ext_e1_lp)

    # --- dof metadata -------------------------------------------------------------
    pos = np.zeros(nfull)
    comp = np.zeros(nfull, dtype=int)
    side = np.zeros(nfull, dtype=int)
    pos[x1m], comp[x1m], side[x1m] = grid.centers_minus, 1, 0
    pos[x1p], comp[x1p], side[x1p] = grid.centers_plus, 1, 1
    pos[x2m], comp[x2m], side[x2m] = grid.nodes_minus, 2, 0
    pos[x2p], comp[x2p], side[x2p] = grid.nodes_plus, 2, 1

    # merged control volumes need flux-balance weighted source samples
    source_rules: dict[int, list] = {}
    if r > 0:
        D = hm / 2 + kappa * hp / 2
        source_rules[red_index[int(x2m[-1])]] = [
            ("minus", grid.l, (hm / 2) / D), ("plus", grid.l, (hp / 2) / D)]
    if boundary_merge is not None:
        which, gamma = boundary_merge
        if which == "a":
            m_w = (hm / 2) * q22_a + (hp / 2) * q22_b * gamma ** 2
            source_rules[red_index[int(x2m[0])]] = [
                ("minus", grid.a, (hm / 2) * q22_a / m_w),
                ("plus", grid.b, (hp / 2) * gamma * q22_b / m_w)]
        else:
            m_w = (hp / 2) * q22_b + (hm / 2) * q22_a * gamma ** 2
            source_rules[red_index[int(x2p[-1])]] = [
                ("plus", grid.b, (hp / 2) * q22_b / m_w),
                ("minus", grid.a, (hm / 2) * gamma * q22_a / m_w)]

    return DiscreteGenerator(A, mass, grid, profile, bc, interface, Z, keep,
                             trace_map, port_map, fI_map, eI_map,
                             pos[keep], comp[keep], side[keep], source_rules)


def discrete_energy(u: np.ndarray, gen: DiscreteGenerator) -> float:
    return gen.energy(u)


def energy_gradient(u: np.ndarray, gen: DiscreteGenerator) -> np.ndarray:
    return gen.energy_gradient(u)


@dataclass(frozen=True)
class DissipativityVerdict:
    passed: bool
    max_symmetric_eig: float
    resolvent_condition: float


def dissipativity_spectrum_check(gen: DiscreteGenerator,
                                 tol: float = 1e-10) -> DissipativityVerdict:
    """Discrete Lumer-Phillips shadow: the mass-weighted symmetric part of A_h
    must be negative semidefinite and I - A_h must be well conditioned."""
    A = gen.A.toarray()
    M = np.diag(gen.mass)
    S = 0.5 * (M @ A + A.T @ M)
    eigs = scipy.linalg.eigvalsh(S)
    scale = max(1.0, float(np.max(np.abs(S))))
    cond = float(np.linalg.cond(np.eye(gen.n) - A))
    passed = eigs[-1] <= tol * scale and np.isfinite(cond)
    return DissipativityVerdict(bool(passed), float(eigs[-1]), cond)


def generator_eigenvalues(gen: DiscreteGenerator) -> np.ndarray:
    vals = scipy.linalg.eigvals(gen.A.toarray())
    return vals[np.argsort(-vals.real)]


def convergence_order(errors, hs) -> float:
    """Least-squares slope of log(error) against log(h)."""
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if errors.size < 3:
        raise ValueError("need at least 3 refinement levels")
    if np.any(errors <= 0):
        return float("inf")  # errors at rounding floor
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])
