"""First variation, mean curvature, and stationarity residuals.

The first variation of the degree-d area along a compactly supported field
V is the integral of (div_d V + f(V)) / Theta against the induced measure,
where div_d is the degree-d divergence and f the curvature pairing with the
degree-d simple m-vectors.  Integrating by parts turns this into the
pairing with a normal mean-curvature field H_d, computed here from three
summand groups built on symbolic tangent/normal frames (the normal frame is
differentiated exactly, not numerically).  For strongly regular immersions
the controls can be eliminated from the admissibility system, leaving the
stationarity residuals; for the Engel-type ruled graphs the remaining
residual is a third-order operator in the graph function.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .admissibility import VariationField, frames_for
from .area import QuadratureGrid
from .exprs import Expr, const, evaluate_many
from .immersion import Immersion
from .moving_frames import ImmersionFrames
from .symmat import edot, einverse, eval_matrix, sum_exprs

__all__ = [
    "MeanCurvatureAtPoint",
    "CriticalResidualExprs",
    "div_degree_d",
    "f_linear",
    "first_variation",
    "mean_curvature",
    "mean_curvature_field_exprs",
    "mean_curvature_bracket_at",
    "duality_integral",
    "critical_residual_exprs",
    "critical_residuals",
]

ZERO = const(0.0)


def div_degree_d(imm: Immersion, field: VariationField, pbar, d: int) -> float:
    """Degree-d divergence of the field at a point."""
    frames = frames_for(imm)
    expr = frames.div_degree_d_expr(field, d)
    return float(expr.eval(imm.param_env(pbar)))


def f_linear(imm: Immersion, vp, pbar, d: int) -> float:
    """Curvature pairing f(V_p) for a single vector (ortho-frame components)."""
    frames = frames_for(imm)
    comps = tuple(const(float(c)) for c in np.asarray(vp, dtype=float))
    field = VariationField("adapted", comps)
    expr = frames.f_linear_expr(field, d)
    return float(expr.eval(imm.param_env(pbar)))


def _support_check(imm: Immersion, frames: ImmersionFrames, field: VariationField,
                   samples_per_edge: int = 33, tol: float = 1e-8):
    comps = frames.ambient_field_from_variation(field)
    m = imm.m
    pts = []
    for axis in range(m):
        for end in (0, 1):
            for t in np.linspace(0.0, 1.0, samples_per_edge):
                p = [lo + t * (hi - lo) for lo, hi in imm.domain]
                p[axis] = imm.domain[axis][end]
                pts.append(p)
    pts = np.asarray(pts)
    env = {name: pts[:, i] for i, name in enumerate(imm.params)}
    vals = evaluate_many(comps, env)
    peak = max(float(np.max(np.abs(np.broadcast_to(v, (pts.shape[0],))))) for v in vals)
    if peak > tol:
        raise ValueError(
            f"variation field does not vanish on the domain boundary (max {peak:.2e})"
        )


def first_variation(imm: Immersion, field: VariationField, grid: QuadratureGrid,
                    d: int, check_support: bool = True) -> float:
    """First variation of the degree-d area along a compactly supported field."""
    frames = frames_for(imm)
    if check_support:
        _support_check(imm, frames, field)
    theta = frames.theta(d)
    integrand = (
        (frames.div_degree_d_expr(field, d) + frames.f_linear_expr(field, d))
        / theta
        * frames.sqrt_detmu
    )
    env = {name: grid.points[:, i] for i, name in enumerate(imm.params)}
    comps = frames.ambient_field_from_variation(field)
    theta_vals, *comp_vals = evaluate_many([theta] + list(comps), env)
    theta_vals = np.broadcast_to(theta_vals, (len(grid),))
    vnorm = np.zeros(len(grid))
    for v in comp_vals:
        vnorm = np.maximum(vnorm, np.abs(np.broadcast_to(v, (len(grid),))))
    active = vnorm > 1e-12 * max(vnorm.max(), 1e-300)
    if np.any(active) and float(np.min(theta_vals[active])) < 1e-10:
        raise ValueError("degree-d density vanishes inside the support of the field")
    vals = np.broadcast_to(integrand.eval(env), (len(grid),))
    return grid.integrate_values(np.asarray(vals, dtype=float))


@dataclass
class MeanCurvatureAtPoint:
    """Mean curvature of degree d at one point, on the orthonormal normal frame.

    ``components[j]`` pairs with the j-th normal frame field (controls
    first); ``parts`` carries the three summand groups whose sum is the
    component.  The (vert, hat, iota) split follows the control-column
    pivots used by the stationarity residuals.
    """

    point: tuple
    components: np.ndarray  # length n - m
    parts: np.ndarray  # (n - m, 3)
    hat_columns: tuple[int, ...]
    vert: np.ndarray
    hat: np.ndarray
    iota: np.ndarray
    normal_frame: np.ndarray  # ortho comps, n x (n - m)


def _hat_columns(frames: ImmersionFrames, d: int, columns=None) -> tuple[int, ...]:
    """Control columns making the square block of A_perp invertible at base."""
    sym = frames.normal_system(d)
    ell, k = sym.shape.ell, sym.shape.k
    if columns is not None:
        if len(columns) != ell:
            raise ValueError(f"need exactly {ell} control columns")
        return tuple(int(c) for c in columns)
    if ell == 0:
        return ()
    A, _, _ = sym.at(frames.imm, frames.base)
    best, best_det = None, 0.0
    for cols in itertools.combinations(range(k), ell):
        det = abs(float(np.linalg.det(A[:, cols])))
        if det > best_det:
            best, best_det = cols, det
    if best is None or best_det <= 1e-12:
        raise ValueError("no invertible control block: immersion is not strongly regular")
    return tuple(best)


def mean_curvature(imm: Immersion, pbar, d: int) -> MeanCurvatureAtPoint:
    frames = frames_for(imm)
    triples = frames.mean_curvature_exprs(d)
    env = imm.param_env(pbar)
    flat = [e for tri in triples for e in tri]
    vals = np.array(evaluate_many(flat, env), dtype=float).reshape(len(triples), 3)
    comps = vals.sum(axis=1)
    k = frames.k
    try:
        hat_cols = _hat_columns(frames, d)
    except ValueError:
        hat_cols = ()
    hat = comps[list(hat_cols)] if hat_cols else np.zeros(0)
    iota_cols = [j for j in range(k) if j not in hat_cols]
    iota = comps[iota_cols] if iota_cols else np.zeros(0)
    vert = comps[k:]
    normal = eval_matrix(frames.normal_amb, env)
    return MeanCurvatureAtPoint(tuple(pbar), comps, vals, hat_cols, vert, hat, iota, normal)


def mean_curvature_field_exprs(imm: Immersion, d: int) -> list[Expr]:
    """Ortho-frame components of H_d as expressions over the parameters."""
    frames = frames_for(imm)
    triples = frames.mean_curvature_exprs(d)
    out = [ZERO for _ in range(frames.n)]
    for j, (h1, h2, h3) in enumerate(triples):
        hj = h1 + h2 + h3
        for i in range(frames.n):
            out[i] = out[i] + hj * frames.normal_amb[i][j]
    return out


def mean_curvature_bracket_at(imm: Immersion, pbar, d: int) -> np.ndarray:
    """Bracket-form curvature components (cross-check; needs a graph chart)."""
    frames = frames_for(imm)
    exprs = frames.mean_curvature_bracket_exprs(d)
    return np.array(evaluate_many(exprs, imm.param_env(pbar)), dtype=float)


def duality_integral(imm: Immersion, field: VariationField, grid: QuadratureGrid, d: int) -> float:
    """Integral of <V, H_d> against the induced measure."""
    frames = frames_for(imm)
    triples = frames.mean_curvature_exprs(d)
    comps = frames.ambient_field_from_variation(field)
    total = ZERO
    for j, (h1, h2, h3) in enumerate(triples):
        hj = h1 + h2 + h3
        ncol = [frames.normal_amb[i][j] for i in range(frames.n)]
        total = total + hj * edot(comps, ncol)
    integrand = total * frames.sqrt_detmu
    env = {name: grid.points[:, i] for i, name in enumerate(imm.params)}
    vals = np.broadcast_to(integrand.eval(env), (len(grid),))
    return grid.integrate_values(np.asarray(vals, dtype=float))


@dataclass
class CriticalResidualExprs:
    """Stationarity residuals as expressions over the parameters."""

    iota: list[Expr]
    vert: list[Expr]
    hat_columns: tuple[int, ...]
    control_scale: Expr


def critical_residual_exprs(imm: Immersion, d: int, columns=None) -> CriticalResidualExprs:
    """Eliminate the controls from the curvature pairing (strongly regular case).

    The vert residual pairs with the free normal components against the
    induced measure: for an admissible normal field with free part Psi the
    first variation equals integral(vert . Psi) d mu, plus the iota pairing
    when the control block is wider than the number of constraints.
    """
    frames = frames_for(imm)
    sym = frames.normal_system(d)
    shape = sym.shape
    ell, k = shape.ell, shape.k
    n, m = frames.n, frames.m
    triples = frames.mean_curvature_exprs(d)
    H = [h1 + h2 + h3 for (h1, h2, h3) in triples]
    hat_cols = _hat_columns(frames, d, columns)
    if ell == 0:
        return CriticalResidualExprs(list(H[:k]), list(H[k:]), (), const(1.0))
    iota_cols = [j for j in range(k) if j not in hat_cols]
    Ahat = [[sym.A[i][c] for c in hat_cols] for i in range(ell)]
    Ahat_inv = einverse(Ahat)
    Hhat = [H[c] for c in hat_cols]
    # row vector w = H^hat (A^hat)^{-1}
    w = [
        sum_exprs([Hhat[i] * Ahat_inv[i][q] for i in range(ell)]) for q in range(ell)
    ]
    iota_res = []
    for pos, c in enumerate(iota_cols):
        acc = H[c]
        for q in range(ell):
            acc = acc - w[q] * sym.A[q][c]
        iota_res.append(acc)
    nfree = n - m - k
    vert_res = []
    for r in range(nfree):
        acc = H[k + r]
        for q in range(ell):
            acc = acc - w[q] * sym.B[q][r]
        for j in range(m):
            u = sum_exprs([w[q] * sym.C[j][q][r] for q in range(ell)])
            param_col = [sym.tangent_param[a][j] for a in range(m)]
            div_e = frames.div_tangent(param_col)
            acc = acc - (-frames.tangent_derivative(param_col, u) - div_e * u)
        vert_res.append(acc)
    scale = Ahat[0][0] if ell == 1 else const(1.0)
    return CriticalResidualExprs(iota_res, vert_res, hat_cols, scale)


def critical_residuals(imm: Immersion, pbar, d: int, columns=None):
    """Numeric stationarity residuals (iota part, vert part) at a point."""
    res = critical_residual_exprs(imm, d, columns)
    env = imm.param_env(pbar)
    iota = np.array(evaluate_many(res.iota, env), dtype=float) if res.iota else np.zeros(0)
    vert = np.array(evaluate_many(res.vert, env), dtype=float) if res.vert else np.zeros(0)
    return iota, vert
