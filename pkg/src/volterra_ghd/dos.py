"""Density of states of the Volterra GGE via the Euler-Lagrange equation.

The unknown is varrho = beta * rho on a cell-centered uniform grid in the
frequency variable w, discretized with hat functions whose log-kernel
integrals are evaluated from exact piecewise antiderivatives.  Near w = 0
the density diverges like 1/(w ln^2 w), which no polynomial basis can
integrate, so the first few cells are replaced by an auxiliary patch in the
variable v = -1/ln(w): there phi(v) = varrho * w * ln^2(w) is smooth and a
second hat basis in v resolves the singular mass.  The Euler-Lagrange fixed
point is then found by damped iteration under the constraint
int varrho = beta.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from .ensembles import GgeParams

__all__ = [
    "RadialGrid",
    "ElDiscretization",
    "DosSolution",
    "SolverError",
    "assemble_T",
    "build_discretization",
    "solve_el",
    "el_functional",
    "sigma_from_dos",
    "sigma_by_beta_derivative",
    "default_grid",
]


class SolverError(RuntimeError):
    """Euler-Lagrange iteration failed (overflow or divergence)."""


@dataclass(frozen=True)
class RadialGrid:
    """Uniform cell-centered grid on [0, w_max].

    Nodes sit at w_i = (i - 1/2) h, i = 1..m, which keeps ln(w) and the
    near-zero singularity of the density off the grid.  Plain quadratures
    are midpoint sums with weight h per node.
    """

    w_max: float
    m: int
    nodes: np.ndarray = field(init=False, repr=False)
    h: float = field(init=False)

    def __post_init__(self) -> None:
        if self.w_max <= 0 or self.m < 2:
            raise ValueError("need w_max > 0 and m >= 2")
        h = self.w_max / self.m
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "nodes", (np.arange(1, self.m + 1) - 0.5) * h)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.m, self.h)

    def quad(self, values: np.ndarray) -> float:
        """Midpoint quadrature of node values over [0, w_max]."""
        return float(self.h * np.sum(values, axis=-1))


def default_grid(beta: float, m: int = 2000) -> RadialGrid:
    return RadialGrid(max(6.0, 4.0 * np.sqrt(beta)), m)


def _xlogx(u: np.ndarray) -> np.ndarray:
    """u * ln|u| extended by continuity to 0 at u = 0."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    nz = u != 0.0
    out[nz] = u[nz] * np.log(np.abs(u[nz]))
    return out


def _linear_log_segment(c, p, q, alpha, gamma):
    """Exact integral of (alpha + gamma z) ln|z - c| over [p, q].

    Antiderivative in u = z - c:
        (alpha + gamma c)(u ln|u| - u) + gamma (u^2 ln|u| / 2 - u^2 / 4)
    which is continuous through u = 0, so cells containing the singularity
    need no splitting.  All arguments broadcast.
    """
    A = alpha + gamma * c

    def F(u):
        return A * (_xlogx(u) - u) + gamma * (0.5 * u * _xlogx(u) - 0.25 * u * u)

    return F(q - c) - F(p - c)


def _hat_pieces(nodes: np.ndarray, spacing: float, left_edge: float, right_edge: float):
    """Two linear pieces per hat basis function, with constant clamps at the
    patch edges so every basis weight integrates to ``spacing``."""
    n = nodes.size
    p0 = np.empty(n)
    q0 = np.empty(n)
    a0 = np.empty(n)
    g0 = np.empty(n)
    p1 = np.empty(n)
    q1 = np.empty(n)
    a1 = np.empty(n)
    g1 = np.empty(n)
    # rising piece on [x_{j-1}, x_j]; clamped to 1 on [left_edge, x_1] for j=1
    p0[0], q0[0], a0[0], g0[0] = left_edge, nodes[0], 1.0, 0.0
    p0[1:], q0[1:] = nodes[:-1], nodes[1:]
    a0[1:] = -nodes[:-1] / spacing
    g0[1:] = 1.0 / spacing
    # falling piece on [x_j, x_{j+1}]; clamped to 1 on [x_n, right_edge] for j=n
    p1[:-1], q1[:-1] = nodes[:-1], nodes[1:]
    a1[:-1] = nodes[1:] / spacing
    g1[:-1] = -1.0 / spacing
    p1[-1], q1[-1], a1[-1], g1[-1] = nodes[-1], right_edge, 1.0, 0.0
    return (p0, q0, a0, g0), (p1, q1, a1, g1)


def _hat_log_block(row_pts: np.ndarray, nodes: np.ndarray, spacing: float,
                   left_edge: float, right_edge: float) -> np.ndarray:
    """(T phi_j)(p_i) for hat functions in z, rows at arbitrary points p_i.

    Kernel split ln|p^2 - z^2| = ln|p - z| + ln(p + z); both halves use the
    exact linear-log antiderivative, valid whether or not p falls inside a
    segment.
    """
    c = row_pts[:, None]
    out = np.zeros((row_pts.size, nodes.size))
    for p, q, al, ga in _hat_pieces(nodes, spacing, left_edge, right_edge):
        out += _linear_log_segment(c, p[None, :], q[None, :], al[None, :], ga[None, :])
        out += _linear_log_segment(-c, p[None, :], q[None, :], al[None, :], ga[None, :])
    return out


def _z_of_v(v):
    return np.exp(-1.0 / np.asarray(v, dtype=float))


def _aux_log_block(row_pts: np.ndarray, v_nodes: np.ndarray, hv: float,
                   v_cut: float, gauss_order: int = 24) -> np.ndarray:
    """(T psi_k)(p_i) for the auxiliary basis psi_k(z) dz = hat_k(v) dv.

    Each linear-in-v piece is integrated by Gauss-Legendre; entries whose
    row point lies inside or next to the piece's z-range (only auxiliary
    rows can) are redone adaptively around the kernel singularity.
    """
    gx, gw = leggauss(gauss_order)
    out = np.zeros((row_pts.size, v_nodes.size))
    pieces = _hat_pieces(v_nodes, hv, 0.0, v_cut)
    p_col = row_pts[:, None]
    for piece_idx, (plo, phi, al, ga) in enumerate(pieces):
        for k in range(v_nodes.size):
            lo, hi, alpha, gamma = plo[k], phi[k], al[k], ga[k]
            if hi <= lo:
                continue
            mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
            v = mid + half * gx
            z = _z_of_v(v)
            lin = alpha + gamma * v
            kern = np.log(np.abs(p_col - z[None, :])) + np.log(p_col + z[None, :])
            out[:, k] += half * (kern * (lin * gw)[None, :]).sum(axis=1)
            # adaptive fix-up for rows near/inside this piece's z-range
            zlo, zhi = _z_of_v(lo) if lo > 0 else 0.0, _z_of_v(hi)
            span = zhi - zlo
            near = (row_pts > zlo - span) & (row_pts < zhi + span)
            for i in np.nonzero(near)[0]:
                pi = row_pts[i]

                def f(vv, pi=pi, alpha=alpha, gamma=gamma):
                    zz = _z_of_v(vv)
                    return (np.log(np.abs(pi - zz)) + np.log(pi + zz)) * (alpha + gamma * vv)

                pts = []
                if zlo < pi < zhi:
                    pts = [-1.0 / np.log(pi)]
                val, _ = quad(f, lo, hi, points=pts or None, limit=200)
                out[i, k] += val - half * float(
                    (np.log(np.abs(pi - z)) + np.log(pi + z)) @ (lin * gw)
                )
    return out


def assemble_T(grid: RadialGrid) -> np.ndarray:
    """Dense matrix of the operator (T phi_j)(w_i) = int ln|w_i^2 - z^2| phi_j.

    phi_j are hat functions on the uniform nodes, clamped to constants on
    the half cells touching 0 and w_max so every basis weight integrates to
    h.  Applying the matrix to node values of psi approximates T psi.
    """
    return _hat_log_block(grid.nodes, grid.nodes, grid.h, 0.0, grid.w_max)


class ElDiscretization:
    """Composite discretization: uniform hats glued to a log-patch near 0.

    Collocation points are the auxiliary points z(v_k) (ascending, all below
    ``z_cut``) followed by the uniform nodes above ``z_cut``.  ``K`` maps
    function values at the points to values of T(function); it is
    symmetrized in the weighted inner product so the discrete dressing
    operator inherits the self-adjointness of the continuous kernel.
    """

    def __init__(self, grid: RadialGrid, z_cut: float = 0.03, n_aux: int = 32):
        self.grid = grid
        h = grid.h
        self.n_cut = max(1, round(z_cut / h))
        self.z_cut = self.n_cut * h
        if self.z_cut >= 1.0:
            raise ValueError("z_cut must stay below 1 for the log patch")
        self.n_aux = n_aux
        self.v_cut = -1.0 / np.log(self.z_cut)
        self.hv = self.v_cut / n_aux
        if 1.0 / (0.5 * self.hv) > 700.0:
            raise ValueError("log patch too deep: exp would overflow")
        self.v_nodes = (np.arange(1, n_aux + 1) - 0.5) * self.hv
        self.aux_z = _z_of_v(self.v_nodes)
        self.hat_nodes = grid.nodes[self.n_cut:]
        self.points = np.concatenate([self.aux_z, self.hat_nodes])
        self.n_points = self.points.size
        # plain quadrature weights: int f dz = sum W_i f(p_i)
        aux_w = self.hv * self.aux_z * np.log(self.aux_z) ** 2
        self.weights = np.concatenate([aux_w, np.full(self.hat_nodes.size, h)])
        K_hat = _hat_log_block(self.points, self.hat_nodes, h, self.z_cut, grid.w_max)
        K_aux = _aux_log_block(self.points, self.v_nodes, self.hv, self.v_cut)
        # the aux block integrates against hats in v, i.e. it acts on the
        # smooth profile phi = f * z ln^2 z; rescale columns so the joint
        # matrix acts on plain function values like the hat block does
        K_aux = K_aux * (self.aux_z * np.log(self.aux_z) ** 2)[None, :]
        K = np.hstack([K_aux, K_hat])
        # weighted symmetrization: W K must be symmetric for the dressing
        # adjoint and commutation identities to hold at the discrete level
        G = self.weights[:, None] * K
        G = 0.5 * (G + G.T)
        self.K = G / self.weights[:, None]

    def quad(self, values: np.ndarray) -> float:
        return float(self.weights @ values)

    def interp_smooth(self, values: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Interpolate a smooth function from the collocation points to w.

        Below the patch boundary interpolation happens in the v variable,
        which is where such functions are resolved.
        """
        w = np.asarray(w, dtype=float)
        out = np.empty_like(w)
        hat = w >= self.z_cut
        out[hat] = np.interp(w[hat], self.hat_nodes,
                             values[self.n_aux:])
        if np.any(~hat):
            v = -1.0 / np.log(w[~hat])
            anchors_v = np.concatenate([self.v_nodes, [self.v_cut]])
            anchors_f = np.concatenate([values[: self.n_aux], [values[self.n_aux]]])
            out[~hat] = np.interp(v, anchors_v, anchors_f)
        return out

    def density_on_grid(self, varrho_ext: np.ndarray) -> np.ndarray:
        """Node values of the density on the full uniform grid.

        Inside the log patch the singular factor is peeled off and the
        smooth profile phi = varrho * z * ln^2 z is interpolated in v.
        """
        nodes = self.grid.nodes
        out = np.empty(nodes.size)
        out[self.n_cut:] = varrho_ext[self.n_aux:]
        low = nodes[: self.n_cut]
        phi = varrho_ext[: self.n_aux] * self.aux_z * np.log(self.aux_z) ** 2
        phi_edge = varrho_ext[self.n_aux] * self.z_cut * np.log(self.z_cut) ** 2
        anchors_v = np.concatenate([self.v_nodes, [self.v_cut]])
        anchors_f = np.concatenate([phi, [phi_edge]])
        v = -1.0 / np.log(low)
        out[: self.n_cut] = np.interp(v, anchors_v, anchors_f) / (low * np.log(low) ** 2)
        return out


@lru_cache(maxsize=8)
def _cached_discretization(w_max: float, m: int, z_cut: float, n_aux: int) -> ElDiscretization:
    return ElDiscretization(RadialGrid(w_max, m), z_cut, n_aux)


def build_discretization(grid: RadialGrid, z_cut: float = 0.03, n_aux: int = 32) -> ElDiscretization:
    """Cached composite discretization for a grid (K is beta-independent)."""
    return _cached_discretization(grid.w_max, grid.m, z_cut, n_aux)


@dataclass
class DosSolution:
    """Converged discretization of varrho = beta * rho with its multiplier.

    ``varrho`` holds the uniform-grid node values used for export; the
    extended collocation representation that the GHD machinery consumes is
    kept alongside (``disc``, ``varrho_ext``).
    """

    grid: RadialGrid
    varrho: np.ndarray
    mu: float
    beta: float
    potential: tuple[float, ...]
    converged: bool
    residual: float
    iterations: int
    disc: ElDiscretization = field(repr=False)
    varrho_ext: np.ndarray = field(repr=False)

    @property
    def params(self) -> GgeParams:
        return GgeParams(self.beta, self.potential)

    def el_residual(self) -> float:
        """Sup-norm residual of the Euler-Lagrange equation at the solution."""
        d = self.disc
        p = d.points
        r = (-d.K @ self.varrho_ext - self.params.v_sum(p) + np.log(p)
             + np.log(self.varrho_ext) + 1.0 - self.mu)
        return float(np.max(np.abs(r)))


def solve_el(
    params: GgeParams,
    grid: RadialGrid,
    damping: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    disc: ElDiscretization | None = None,
) -> DosSolution:
    """Newton solve of ln(varrho) = mu - 1 + T varrho + Vsum - ln w with
    the mass constraint int varrho = beta as a bordered row.

    The unknowns are x = ln(varrho) and the multiplier mu; the Jacobian
    block is 1 - T varrho, i.e. the dressing system, which is uniformly
    well conditioned.  Plain damped Picard sweeps are unstable here: the
    log-kernel self-energy of the singular patch puts an eigenvalue well
    below -1 into the fixed-point map.  ``damping`` caps the sup-norm of
    each ln-density update at 4 * damping, which globalizes the iteration
    from the rough starting profile.
    """
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if disc is None:
        disc = build_discretization(grid)
    beta = params.beta
    p = disc.points
    n = p.size
    logp = np.log(p)
    vsum = params.v_sum(p)
    # start from the known singular profile (phi = 1) glued to a Gaussian
    varrho = np.exp(-(p**2)) / (p * logp**2 + p)
    varrho *= beta / disc.quad(varrho)
    x = np.log(varrho)
    mu = 1.0
    step_cap = 4.0 * damping
    residual = np.inf
    converged = False
    it = 0
    J = np.zeros((n + 1, n + 1))
    J[:n, n] = -1.0
    for it in range(1, max_iter + 1):
        if np.max(x) > 700.0:
            raise SolverError(
                "exp overflow in the EL solve; w_max too small or grid too coarse"
            )
        varrho = np.exp(x)
        F = x - (mu - 1.0 + disc.K @ varrho + vsum - logp)
        G = disc.quad(varrho) - beta
        residual = float(max(np.max(np.abs(F)), abs(G)))
        if residual <= tol:
            converged = True
            break
        J[:n, :n] = np.eye(n) - disc.K * varrho[None, :]
        J[n, :n] = disc.weights * varrho
        try:
            step = np.linalg.solve(J, -np.concatenate([F, [G]]))
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular Newton system in the EL solve") from exc
        if not np.all(np.isfinite(step)):
            raise SolverError("non-finite Newton step in the EL solve")
        lam = min(1.0, step_cap / np.max(np.abs(step[:n])))
        x += lam * step[:n]
        mu += lam * step[n]
    varrho = np.exp(x)
    return DosSolution(
        grid=grid,
        varrho=disc.density_on_grid(varrho),
        mu=float(mu),
        beta=beta,
        potential=params.potential,
        converged=converged,
        residual=residual,
        iterations=it,
        disc=disc,
        varrho_ext=varrho,
    )


def el_functional(sol: DosSolution, varrho_ext: np.ndarray | None = None) -> float:
    """Value of the constrained free-energy functional at collocation values.

    Uses the exactly integrated log kernel for the double integral, so the
    diagonal cells carry no quadrature error from the singularity.
    """
    d = sol.disc
    rho = sol.varrho_ext if varrho_ext is None else np.asarray(varrho_ext, dtype=float)
    vsum = sol.params.v_sum(d.points)
    double = -0.5 * d.quad(rho * (d.K @ rho))
    linear = -d.quad((vsum - np.log(d.points)) * rho)
    entropy = d.quad(rho * np.log(rho))
    return double + linear + entropy


def sigma_from_dos(sol: DosSolution) -> tuple[np.ndarray, float]:
    """Normalized density of states sigma_{beta,V} and the constant kappa.

    sigma = varrho * [1]^dr has mass 1/kappa; the returned uniform-grid node
    values are kappa * sigma, which integrate to one.
    """
    from .ghd import DressingOperator  # deferred: ghd depends on this module

    op = DressingOperator(sol)
    sigma_ext = sol.varrho_ext * op.dress(np.ones(sol.disc.n_points))
    kappa = 1.0 / sol.disc.quad(sigma_ext)
    sigma_nodes = sol.varrho * sol.disc.interp_smooth(
        sigma_ext / sol.varrho_ext, sol.grid.nodes
    )
    return kappa * sigma_nodes, kappa


@dataclass
class BetaDerivativeSigma:
    """sigma_{beta,V} from the central difference of beta -> beta * rho."""

    values: np.ndarray
    values_ext: np.ndarray = field(repr=False)
    disc: ElDiscretization = field(repr=False)

    def mass(self) -> float:
        """int sigma dw, which must equal one."""
        return self.disc.quad(self.values_ext)


def sigma_by_beta_derivative(
    params: GgeParams,
    grid: RadialGrid,
    eps: float = 1e-3,
    disc: ElDiscretization | None = None,
    **solver_kwargs,
) -> BetaDerivativeSigma:
    """sigma_{beta,V} via the central difference of beta -> beta * rho.

    Cross-validation route for :func:`sigma_from_dos`; both characterize
    the same derivative of the minimizer family.  ``values`` holds uniform
    grid node values; the extended collocation values carry the singular
    head and are what the mass quadrature needs.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if disc is None:
        disc = build_discretization(grid)
    up = solve_el(GgeParams(params.beta + eps, params.potential), grid, disc=disc, **solver_kwargs)
    dn = solve_el(GgeParams(params.beta - eps, params.potential), grid, disc=disc, **solver_kwargs)
    if not (up.converged and dn.converged):
        raise SolverError("beta-derivative sub-solve did not converge")
    return BetaDerivativeSigma(
        values=(up.varrho - dn.varrho) / (2.0 * eps),
        values_ext=(up.varrho_ext - dn.varrho_ext) / (2.0 * eps),
        disc=disc,
    )
