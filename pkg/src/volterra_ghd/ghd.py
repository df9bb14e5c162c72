"""Dressing transform, susceptibility and charge-current matrices, and
Euler-scale correlation curves for the Volterra lattice GGE.

All operators act on the composite collocation set of the density solve
(log patch near w = 0 plus uniform hat nodes), where the singular spectral
weight is integrable; exported curves are sampled back onto the uniform
grid, where the dressed quantities are smooth.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .dos import DosSolution

__all__ = [
    "DressingOperator",
    "GhdSummary",
    "GhdCurve",
    "effective_velocity",
    "compute_C",
    "compute_B",
    "build_summary",
    "euler_scale_curve",
    "shock_location",
]


class DressingError(RuntimeError):
    pass


class DressingOperator:
    """LU-factorized discretization of (1 - T varrho)^{-1}.

    The kernel matrix of the discretization is symmetric in the weighted
    inner product <f, g> = sum W f g, which makes the discrete dressing
    inherit the adjoint and commutation identities of the continuous
    operator exactly.
    """

    def __init__(self, sol: DosSolution):
        self.sol = sol
        self.grid = sol.grid
        self.disc = sol.disc
        self.points = sol.disc.points
        self.weights = sol.disc.weights
        self.varrho = sol.varrho_ext
        self.K = sol.disc.K
        M = np.eye(self.points.size) - self.K * self.varrho[None, :]
        try:
            self._lu = lu_factor(M)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise DressingError("singular dressing system") from exc

    @property
    def n_points(self) -> int:
        return self.points.size

    def dress(self, psi: np.ndarray) -> np.ndarray:
        """psi^dr = (1 - T varrho)^{-1} psi at the collocation points."""
        psi = np.asarray(psi, dtype=float)
        if not np.all(np.isfinite(psi)):
            raise ValueError("psi must be finite at all collocation points")
        return lu_solve(self._lu, psi)

    def dress_left(self, psi: np.ndarray) -> np.ndarray:
        """(1 - varrho T)^{-1} psi.

        Realized as W^{-1} M^{-T} W psi, which is the exact adjoint of
        ``dress`` in the weighted inner product.
        """
        psi = np.asarray(psi, dtype=float)
        return lu_solve(self._lu, self.weights * psi, trans=1) / self.weights

    def apply_T(self, psi: np.ndarray) -> np.ndarray:
        """T psi from collocation values of psi."""
        return self.K @ np.asarray(psi)

    def quad(self, values: np.ndarray) -> float:
        return self.disc.quad(values)


def effective_velocity(op: DressingOperator) -> np.ndarray:
    """v_eff = [w^2]^dr / [1]^dr at the collocation points."""
    one_dr = op.dress(np.ones(op.n_points))
    if np.any(one_dr == 0):
        raise DressingError("[1]^dr vanishes at a node; invalid varrho")
    w2_dr = op.dress(op.points**2)
    return w2_dr / one_dr


def _dressed_moments(op: DressingOperator, n_max: int):
    """[w^{2n}]^dr for n = 0..n_max plus sigma-related scalars."""
    w = op.points
    dr = [op.dress(np.ones(op.n_points))]
    for n in range(1, n_max + 1):
        dr.append(op.dress(w ** (2 * n)))
    sigma = op.varrho * dr[0]
    kappa = 1.0 / op.quad(sigma)
    sigma_norm = kappa * sigma
    q = np.array([op.quad(sigma_norm * w ** (2 * n)) for n in range(n_max + 1)])
    return dr, sigma_norm, kappa, q


def compute_C(op: DressingOperator, n_max: int = 3) -> np.ndarray:
    """Susceptibility matrix on fields 0..n_max from the dressed moments."""
    quad = op.quad
    dr, sigma_norm, kappa, q = _dressed_moments(op, n_max)
    centered = [dr[n] - q[n] * dr[0] for n in range(n_max + 1)]
    C = np.empty((n_max + 1, n_max + 1))
    C[0, 0] = 0.5 * kappa**2 * quad(sigma_norm * dr[0] ** 2)
    for n in range(1, n_max + 1):
        C[0, n] = C[n, 0] = kappa * quad(sigma_norm * dr[0] * centered[n])
    for mm in range(1, n_max + 1):
        for n in range(mm, n_max + 1):
            C[mm, n] = C[n, mm] = 2.0 * quad(sigma_norm * centered[mm] * centered[n])
    return C


def compute_B(op: DressingOperator, n_max: int = 3, C: np.ndarray | None = None) -> np.ndarray:
    """Charge-current matrix in the theorem sign convention.

    Row and column 0 are set to -C_{n,1}/2; the bulk is the direct
    sigma-weighted triple product with the effective velocity.
    """
    quad = op.quad
    if C is None:
        C = compute_C(op, max(n_max, 1))
    dr, sigma_norm, kappa, q = _dressed_moments(op, n_max)
    veff = effective_velocity(op)
    centered = [dr[n] - q[n] * dr[0] for n in range(n_max + 1)]
    B = np.empty((n_max + 1, n_max + 1))
    for n in range(n_max + 1):
        B[0, n] = B[n, 0] = -0.5 * C[n, 1]
    for mm in range(1, n_max + 1):
        for n in range(mm, n_max + 1):
            val = -(2.0 / kappa) * quad(
                sigma_norm * (veff - q[1]) * centered[mm] * centered[n]
            )
            B[mm, n] = B[n, mm] = val
    return B


@dataclass
class GhdSummary:
    """Everything the Euler-scale comparison needs from one GGE solve.

    ``veff`` holds uniform-grid node values for export.
    """

    beta: float
    potential: tuple[float, ...]
    kappa: float
    q: np.ndarray
    veff: np.ndarray
    xi0: float
    C: np.ndarray
    B: np.ndarray
    grid_w_max: float
    grid_m: int

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "potential": list(self.potential),
            "kappa": self.kappa,
            "q": list(self.q),
            "xi0": self.xi0,
            "C": self.C.tolist(),
            "B": self.B.tolist(),
            "veff": np.asarray(self.veff).tolist(),
            "grid": {"w_max": self.grid_w_max, "m": self.grid_m},
        }


def _veff_at_zero(points: np.ndarray, veff: np.ndarray) -> float:
    """v_eff extrapolated to w = 0.

    v_eff is even with zero slope at 0.  The log patch places collocation
    points exponentially close to 0, where the value can be read off
    directly; on a plain uniform set a quadratic fit in u = w^2 through the
    first three points is used instead.
    """
    u = points[:3] ** 2
    if u[-1] < 1e-12:
        return float(veff[0])
    coef = np.polyfit(u, veff[:3], 2)
    return float(coef[-1])


def shock_location(summary: "GhdSummary") -> float:
    """xi_0 = (q_1 - v_eff(0)) / kappa, the abscissa of the GHD shock.

    Recomputed from the exported uniform-grid v_eff samples, so it agrees
    with what a consumer of the summary could derive.
    """
    from .dos import RadialGrid

    nodes = RadialGrid(summary.grid_w_max, summary.grid_m).nodes
    v0 = _veff_at_zero(nodes, np.asarray(summary.veff))
    return (summary.q[1] - v0) / summary.kappa


def build_summary(op: DressingOperator, n_max: int = 3) -> GhdSummary:
    dr, sigma_norm, kappa, q = _dressed_moments(op, n_max)
    veff = effective_velocity(op)
    C = compute_C(op, n_max)
    B = compute_B(op, n_max, C)
    veff_nodes = op.disc.interp_smooth(veff, op.grid.nodes)
    xi0 = (q[1] - _veff_at_zero(op.grid.nodes, veff_nodes)) / kappa
    return GhdSummary(
        beta=op.sol.beta,
        potential=op.sol.potential,
        kappa=kappa,
        q=q,
        veff=veff_nodes,
        xi0=xi0,
        C=C,
        B=B,
        grid_w_max=op.grid.w_max,
        grid_m=op.grid.m,
    )


@dataclass
class GhdCurve:
    """Parametrized Euler-scale correlation curve for one field pair.

    ``xi`` and ``value`` trace t * S~_{m,n} against xi = x/t, parametrized
    by the grid node w (also stored).  ``diverged`` flags points inside the
    Jacobi-factor divergence zone at the shock.  ``moment0`` and
    ``moment1`` are the curve moments int value dxi and int xi value dxi,
    evaluated in the w parametrization on the full collocation set, where
    the delta-resolved Jacobi factor cancels exactly; a trapezoid in xi
    over the emitted samples cannot see the singular spectral mass
    compressed against the shock.
    """

    pair: tuple[int, int]
    w: np.ndarray
    xi: np.ndarray
    value: np.ndarray
    diverged: np.ndarray
    xi0: float
    moment0: float
    moment1: float

    def moment(self, order: int) -> float:
        """Curve moment int xi^order value dxi (orders 0 and 1)."""
        if order == 0:
            return self.moment0
        if order == 1:
            return self.moment1
        raise ValueError("only moments of order 0 and 1 are defined")

    def moment_xi_trapezoid(self, order: int, include_diverged: bool = True) -> float:
        """Trapezoid of xi^order * value over the emitted (xi, value) samples.

        Consistency check for the Jacobi factor away from the shock; it
        underestimates the exact moments by the spectral mass hidden in the
        shock zone.
        """
        xi, val = self.xi, self.value
        if not include_diverged:
            keep = ~self.diverged
            xi, val = xi[keep], val[keep]
        return float(np.trapezoid(xi**order * val, xi))


def _pair_integrand(pair, dr, sigma_norm, kappa, q):
    m, n = pair
    if m == 0 and n == 0:
        return 0.5 * kappa**2 * sigma_norm * dr[0] ** 2
    if m == 0 or n == 0:
        k = max(m, n)
        return kappa * sigma_norm * dr[0] * (dr[k] - q[k] * dr[0])
    return 2.0 * sigma_norm * (dr[m] - q[m] * dr[0]) * (dr[n] - q[n] * dr[0])


def euler_scale_curve(
    op: DressingOperator,
    m: int,
    n: int,
    summary: GhdSummary | None = None,
    diverge_rtol: float = 1e-3,
) -> GhdCurve:
    """Euler-scale curve for the pair (m, n).

    Each node w maps to xi(w) = -(v_eff(w) - q_1)/kappa and to the
    delta-resolved integrand value I_{m,n}(w) * kappa / |v_eff'(w)|.  The
    kappa factor comes from resolving the delta in the variable xi = x/t
    and is pinned by the zeroth-moment sum rule (curve integral = C_{m,n}).
    Points where |v_eff'| collapses near w = 0 are flagged, not dropped.
    """
    if min(m, n) < 0:
        raise ValueError("field indices must be nonnegative")
    grid = op.grid
    nodes = grid.nodes
    n_top = max(m, n, 1)
    dr, sigma_norm, kappa, q = _dressed_moments(op, n_top)
    veff_ext = effective_velocity(op)
    integrand_ext = _pair_integrand((m, n), dr, sigma_norm, kappa, q)
    xi_ext = -(veff_ext - q[1]) / kappa
    moment0 = op.quad(integrand_ext)
    moment1 = op.quad(xi_ext * integrand_ext)

    # sample onto the uniform grid: dressed factors are smooth, the
    # singular spectral weight sits in sol.varrho itself
    interp = op.disc.interp_smooth
    dr_nodes = [interp(d, nodes) for d in dr]
    sigma_nodes = kappa * op.sol.varrho * dr_nodes[0]
    integrand = _pair_integrand((m, n), dr_nodes, sigma_nodes, kappa, q)
    veff = interp(veff_ext, nodes)
    xi0 = (q[1] - _veff_at_zero(nodes, veff)) / kappa
    interior = np.diff(veff)
    if not (np.all(interior >= 0) or np.all(interior <= 0)):
        bad = int(np.sum(np.diff(np.sign(interior)) != 0))
        if bad > 1:  # a single flat spot near zero is the expected shock zone
            raise DressingError("v_eff is not monotone on the grid")
    dv = np.gradient(veff, nodes)
    scale = np.max(np.abs(dv))
    diverged = np.abs(dv) < diverge_rtol * scale
    with np.errstate(divide="ignore"):
        value = integrand * kappa / np.abs(dv)
    xi = -(veff - q[1]) / kappa
    order = np.argsort(xi)
    return GhdCurve(
        pair=(m, n),
        w=nodes[order],
        xi=xi[order],
        value=value[order],
        diverged=diverged[order],
        xi0=xi0,
        moment0=moment0,
        moment1=moment1,
    )
