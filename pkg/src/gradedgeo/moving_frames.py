"""Symbolic moving frames along an immersion.

Everything needed by the admissibility systems and the variational formulas
is built once per immersion as expressions in the parameters: the ambient
orthonormal adapted frame restricted to the surface, the degree-adapted
(echelon) tangent basis, its orthonormalization, an adapted orthonormal
frame of the normal bundle, the degree-d density, and covariant-derivative
helpers.  Evaluating at a point is then a cached DAG evaluation.

Structural choices that need a fixed pattern over the domain (echelon pivot
rows, normal Gram-Schmidt pivoting, invertible control-column selection) are
made numerically at a base point, by default the domain midpoint, and reused
across the domain; equiregularity of the catalog immersions makes the
patterns valid away from degeneracies.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exprs import Expr, call, const, div
from .immersion import Immersion
from .manifold import lie_bracket_exprs
from .multivec import DegenerateInputError, all_multi_indices, degree_of_index, dim_gt
from .symmat import (
    edet,
    edot,
    einverse,
    emat_mul,
    eval_matrix,
    gram_schmidt_from_gram,
    sum_exprs,
)

__all__ = ["ImmersionFrames", "SystemShape", "SymbolicSystem"]

ZERO = const(0.0)
ONE = const(1.0)

_NORMAL_PIVOT_TOL = 1e-8


@dataclass(frozen=True)
class SystemShape:
    """Integer data of the admissibility system."""

    m: int
    n: int
    degree: int
    ell: int
    iota0: int
    rho: int
    k: int
    basis: tuple[tuple[int, ...], ...]  # multi-indices of degree > d, lex order
    flag_dims: tuple[int, ...]


@dataclass
class SymbolicSystem:
    """Admissibility system with expression-valued matrices.

    ``A`` couples the control components, ``B`` the remaining components,
    and ``C[j]`` the directional derivative along the j-th tangent frame
    field.  ``tangent_param`` holds the parameter-space components of the
    tangent frame used for those derivatives.
    """

    shape: SystemShape
    A: list[list[Expr]]
    B: list[list[Expr]]
    C: list[list[list[Expr]]]
    tangent_param: list[list[Expr]]
    control_cols: int
    other_cols: int

    def at(self, imm: Immersion, pbar):
        """Numeric (A, B, [C_j]) matrices at a parameter point."""
        env = imm.param_env(pbar)
        ell = self.shape.ell

        def _eval(M, cols):
            if ell == 0 or cols == 0:
                return np.zeros((ell, cols))
            return eval_matrix(M, env)

        return (
            _eval(self.A, self.control_cols),
            _eval(self.B, self.other_cols),
            [_eval(Cj, self.other_cols) for Cj in self.C],
        )


class ImmersionFrames:
    """Lazily built symbolic frames and derived operators along an immersion."""

    def __init__(self, imm: Immersion, base_point=None):
        self.imm = imm
        self.mani = imm.manifold
        self.base = np.asarray(
            base_point if base_point is not None else imm.midpoint(), dtype=float
        )
        self._theta_cache: dict[int, Expr] = {}
        self._tangent_coeff_cache: dict[int, dict] = {}
        self._adapted_cache: dict[int, SymbolicSystem] = {}
        self._normal_cache: dict[int, SymbolicSystem] = {}
        self._mc_cache: dict[int, list] = {}

    # -- composition with the immersion ------------------------------------

    @cached_property
    def _phi_map(self) -> dict:
        return {
            name: comp for name, comp in zip(self.mani.coords, self.imm.components)
        }

    def compose(self, expr: Expr) -> Expr:
        """Restrict an ambient expression to the surface (substitute Phi)."""
        return expr.substitute(self._phi_map)

    def compose_matrix(self, mat):
        return [[self.compose(e) for e in row] for row in mat]

    # -- frames --------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.mani.n

    @property
    def m(self) -> int:
        return self.imm.m

    @cached_property
    def ortho_mat(self):
        """Ambient orthonormal adapted frame along M (coordinate comps, columns)."""
        return [[self.compose(e) for e in row] for row in self.mani.ortho_matrix_exprs]

    @cached_property
    def ortho_coframe(self):
        return [[self.compose(e) for e in row] for row in self.mani.ortho_coframe_exprs]

    @cached_property
    def tau(self):
        """Orthonormal-frame components of dPhi (n x m expressions)."""
        return emat_mul(self.ortho_coframe, self.imm.jacobian_exprs)

    @cached_property
    def mu_param(self):
        """Induced metric on the parameter basis: tau^T tau."""
        n, m = self.n, self.m
        out = [[ZERO for _ in range(m)] for _ in range(m)]
        for a in range(m):
            for b in range(m):
                out[a][b] = sum_exprs([self.tau[i][a] * self.tau[i][b] for i in range(n)])
        return out

    @cached_property
    def sqrt_detmu(self) -> Expr:
        return call("sqrt", edet(self.mu_param))

    @cached_property
    def flag_dims(self) -> tuple[int, ...]:
        return self.imm.tangent_flag_dims(self.base)

    @cached_property
    def pivots(self) -> tuple[int, ...]:
        return self.imm.adapted_tangent_pivots(self.base)

    @cached_property
    def adapted_param(self):
        """Parameter components of the echelon tangent basis (columns)."""
        P = [[self.tau[p - 1][a] for a in range(self.m)] for p in self.pivots]
        return einverse(P)

    @cached_property
    def adapted_amb(self):
        """Orthonormal-frame components of the echelon tangent basis (n x m)."""
        return emat_mul(self.tau, self.adapted_param)

    @cached_property
    def adapted_coord(self):
        return emat_mul(self.ortho_mat, self.adapted_amb)

    @cached_property
    def _tangent_gs(self):
        gram = [
            [
                sum_exprs(
                    [self.adapted_amb[i][a] * self.adapted_amb[i][b] for i in range(self.n)]
                )
                for b in range(self.m)
            ]
            for a in range(self.m)
        ]
        return gram_schmidt_from_gram(gram)

    @cached_property
    def E_amb(self):
        """Orthonormal tangent frame (ortho comps, n x m), Gram-Schmidt of the echelon basis."""
        return emat_mul(self.adapted_amb, self._tangent_gs)

    @cached_property
    def E_param(self):
        return emat_mul(self.adapted_param, self._tangent_gs)

    @cached_property
    def E_coord(self):
        return emat_mul(self.ortho_mat, self.E_amb)

    # -- shape integers ------------------------------------------------------

    @cached_property
    def iota0(self) -> int:
        for j, dim in enumerate(self.flag_dims, start=1):
            if dim > 0:
                return j
        raise DegenerateInputError("tangent flag is empty")

    @property
    def rho(self) -> int:
        return self.mani.growth.dims[self.iota0 - 1]

    @property
    def k(self) -> int:
        return self.rho - self.flag_dims[self.iota0 - 1]

    def ell_basis(self, d: int) -> tuple[tuple[int, ...], ...]:
        weights = self.mani.weights
        return tuple(
            J
            for J in all_multi_indices(self.n, self.m)
            if degree_of_index(J, weights) > d
        )

    def shape_for(self, d: int) -> SystemShape:
        basis = self.ell_basis(d)
        ell = len(basis)
        assert ell == dim_gt(self.mani.growth, self.m, d)
        return SystemShape(
            self.m, self.n, d, ell, self.iota0, self.rho, self.k, basis, self.flag_dims
        )

    # -- normal frame ---------------------------------------------------------

    @cached_property
    def normal_data(self):
        """Adapted orthonormal normal frame: controls (low-layer sources) first.

        Gram-Schmidt of the ambient frame fields projected onto the normal
        space; within each group, candidates are pivoted by projection
        residual at the base point, and each field keeps the orientation of
        its source (positive inner product with the source frame field).
        """
        n, m = self.n, self.m
        env = self.imm.param_env(self.base)
        E_cols = [[self.E_amb[i][a] for i in range(n)] for a in range(m)]
        accepted: list[list[Expr]] = []
        sources: list[int] = []

        def residual_for(q: int) -> list[Expr]:
            w: list[Expr] = [ONE if i == q else ZERO for i in range(n)]
            for col in E_cols + accepted:
                coeff = edot(w, col)
                w = [w[i] - coeff * col[i] for i in range(n)]
            return w

        def run_group(candidates, want: int):
            remaining = list(candidates)
            for _ in range(want):
                best_q, best_norm, best_w = None, 0.0, None
                for q in remaining:
                    w = residual_for(q)
                    norm2 = float(edot(w, w).eval(env))
                    if norm2 > best_norm:
                        best_q, best_norm, best_w = q, norm2, w
                if best_q is None or best_norm <= _NORMAL_PIVOT_TOL:
                    raise DegenerateInputError(
                        "normal frame construction degenerate at the base point"
                    )
                remaining.remove(best_q)
                nrm = call("sqrt", edot(best_w, best_w))
                accepted.append([div(c, nrm) for c in best_w])
                sources.append(best_q)

        run_group(range(self.rho), self.k)
        run_group(range(self.rho, n), n - m - self.k)
        normal_cols = [[accepted[j][i] for j in range(n - m)] for i in range(n)]
        return normal_cols, tuple(sources)

    @cached_property
    def normal_amb(self):
        """Ortho comps of the normal frame, n x (n-m), control block first."""
        return self.normal_data[0]

    @cached_property
    def normal_coord(self):
        return emat_mul(self.ortho_mat, self.normal_amb)

    # -- covariant machinery ----------------------------------------------------

    @cached_property
    def christoffel(self):
        """Gamma^c_ab composed with the immersion (expressions in the parameters)."""
        gam = self.mani.christoffel_exprs
        n = self.n
        return [
            [[self.compose(gam[c][a][b]) for b in range(n)] for a in range(n)]
            for c in range(n)
        ]

    @cached_property
    def frame_coord_derivs(self):
        """dX[a][c][j] = (d_a of ortho frame comp c of field j), composed."""
        raw = self.mani.ortho_frame_derivative_exprs
        n = self.n
        return [
            [[self.compose(raw[a][c][j]) for j in range(n)] for c in range(n)]
            for a in range(n)
        ]

    def tangent_derivative(self, param_col, f: Expr) -> Expr:
        """Directional derivative of a parameter function along a tangent field."""
        return sum_exprs(
            [param_col[a] * f.diff(name) for a, name in enumerate(self.imm.params)]
        )

    def nabla_field_along(self, param_col, field_coord) -> list[Expr]:
        """nabla_v W for W given along M (coordinate comps), v tangent (param comps)."""
        n = self.n
        v_coord = [
            sum_exprs([self.imm.jacobian_exprs[c][a] * param_col[a] for a in range(self.m)])
            for c in range(n)
        ]
        out = []
        for c in range(n):
            deriv = self.tangent_derivative(param_col, field_coord[c])
            gamma = sum_exprs(
                [
                    self.christoffel[c][a][b] * v_coord[a] * field_coord[b]
                    for a in range(n)
                    for b in range(n)
                    if not (self.christoffel[c][a][b] is ZERO)
                ]
            )
            out.append(deriv + gamma)
        return out

    def nabla_ambient_field(self, v_coord, field_index: int) -> list[Expr]:
        """nabla_v X_field for an ambient orthonormal frame field, v in coord comps."""
        n = self.n
        out = []
        for c in range(n):
            deriv = sum_exprs(
                [v_coord[a] * self.frame_coord_derivs[a][c][field_index] for a in range(n)]
            )
            gamma = sum_exprs(
                [
                    self.christoffel[c][a][b]
                    * v_coord[a]
                    * self.ortho_mat[b][field_index]
                    for a in range(n)
                    for b in range(n)
                    if not (self.christoffel[c][a][b] is ZERO)
                ]
            )
            out.append(deriv + gamma)
        return out

    def to_ortho_comps(self, coord_col) -> list[Expr]:
        return [edot(self.ortho_coframe[i], coord_col) for i in range(self.n)]

    def wedge_inner_unit(self, cols_amb, J) -> Expr:
        """<col_1 ^ ... ^ col_m, X_J> with columns in ortho comps."""
        mat = [[cols_amb[a][j - 1] for j in J] for a in range(self.m)]
        return edet(mat)

    def nabla_simple_mvector_inner(self, wedge_cols, v_coord, J) -> Expr:
        """<wedge_cols, nabla_v (X_J)> via the Leibniz rule."""
        total = ZERO
        for slot in range(self.m):
            dcol = self.to_ortho_comps(self.nabla_ambient_field(v_coord, J[slot] - 1))
            mat = []
            for a in range(self.m):
                row = []
                for b, j in enumerate(J):
                    if b == slot:
                        row.append(edot([wedge_cols[a][i] for i in range(self.n)], dcol))
                    else:
                        row.append(wedge_cols[a][j - 1])
                mat.append(row)
            total = total + edet(mat)
        return total

    # -- degree-d data ------------------------------------------------------------

    def tangent_coeffs(self, d: int) -> dict:
        """{J: <E_1 ^...^ E_m, X_J>} over indices of degree exactly d."""
        got = self._tangent_coeff_cache.get(d)
        if got is None:
            weights = self.mani.weights
            E_cols = [[self.E_amb[i][a] for i in range(self.n)] for a in range(self.m)]
            got = {
                J: self.wedge_inner_unit(E_cols, J)
                for J in all_multi_indices(self.n, self.m)
                if degree_of_index(J, weights) == d
            }
            self._tangent_coeff_cache[d] = got
        return got

    def theta(self, d: int) -> Expr:
        got = self._theta_cache.get(d)
        if got is None:
            coeffs = self.tangent_coeffs(d)
            got = call("sqrt", sum_exprs([c * c for c in coeffs.values()]))
            self._theta_cache[d] = got
        return got

    def div_tangent(self, param_comps) -> Expr:
        """Intrinsic divergence of a tangent field given in parameter comps."""
        w = self.sqrt_detmu
        total = ZERO
        for a, name in enumerate(self.imm.params):
            total = total + (w * param_comps[a]).diff(name)
        return div(total, w)

    # -- admissibility systems -----------------------------------------------------

    def _beta_entry(self, tangent_amb, tangent_param, J, field_coord) -> Expr:
        """One coefficient of the zeroth-order block, nabla form:

        beta = <e_1^..^e_m, nabla_X X_J> + sum_j <e_1^..(nabla_{e_j} X)..^e_m, X_J>
        where X is the ambient field of the column (coordinate comps given).
        """
        e_cols = [[tangent_amb[i][a] for i in range(self.n)] for a in range(self.m)]
        total = self.nabla_simple_mvector_inner(e_cols, field_coord, J)
        for j in range(self.m):
            param_col = [tangent_param[a][j] for a in range(self.m)]
            dfield = self.to_ortho_comps(self.nabla_field_along(param_col, field_coord))
            mat = []
            for a in range(self.m):
                row = []
                for b, jj in enumerate(J):
                    if a == j:
                        row.append(dfield[jj - 1])
                    else:
                        row.append(e_cols[a][jj - 1])
                mat.append(row)
            total = total + edet(mat)
        return total

    def adapted_system(self, d: int) -> SymbolicSystem:
        """System in the ambient orthonormal adapted frame, echelon tangent basis."""
        got = self._adapted_cache.get(d)
        if got is None:
            got = self.adapted_system_with_tangent(d, self.adapted_amb, self.adapted_param)
            self._adapted_cache[d] = got
        return got

    def adapted_system_with_tangent(self, d: int, t_amb, t_param) -> SymbolicSystem:
        """Adapted-frame system assembled on a caller-supplied tangent basis."""
        shape = self.shape_for(d)
        n, m, rho = self.n, self.m, shape.rho
        e_cols = [[t_amb[i][a] for i in range(n)] for a in range(m)]
        C = []
        for j in range(m):
            Cj = []
            for Ji in shape.basis:
                row = []
                for h in range(rho, n):
                    mat = []
                    for a in range(m):
                        rowm = []
                        for jj in Ji:
                            if a == j:
                                rowm.append(ONE if h == jj - 1 else ZERO)
                            else:
                                rowm.append(e_cols[a][jj - 1])
                        mat.append(rowm)
                    row.append(edet(mat))
                Cj.append(row)
            C.append(Cj)
        A = []
        B = []
        for Ji in shape.basis:
            rowA, rowB = [], []
            for h in range(n):
                field_coord = [self.ortho_mat[c][h] for c in range(n)]
                entry = self._beta_entry(t_amb, t_param, Ji, field_coord)
                (rowA if h < rho else rowB).append(entry)
            A.append(rowA)
            B.append(rowB)
        return SymbolicSystem(shape, A, B, C, t_param, rho, n - rho)

    def normal_system(self, d: int) -> SymbolicSystem:
        """System on the adapted normal frame, orthonormal tangent derivatives."""
        got = self._normal_cache.get(d)
        if got is not None:
            return got
        shape = self.shape_for(d)
        n, m, ell, k = self.n, self.m, shape.ell, self.k
        E_cols = [[self.E_amb[i][a] for i in range(n)] for a in range(m)]
        normal = self.normal_amb
        nfree = n - m - k
        C = []
        for j in range(m):
            Cj = []
            for Ji in shape.basis:
                row = []
                for h in range(k, n - m):
                    ncol = [normal[i][h] for i in range(n)]
                    mat = []
                    for a in range(m):
                        rowm = []
                        for b, jj in enumerate(Ji):
                            if a == j:
                                rowm.append(ncol[jj - 1])
                            else:
                                rowm.append(E_cols[a][jj - 1])
                        mat.append(rowm)
                    row.append(edet(mat))
                Cj.append(row)
            C.append(Cj)
        A = []
        B = []
        for Ji in shape.basis:
            rowA, rowB = [], []
            for h in range(n - m):
                field_coord = [
                    edot(self.ortho_mat[c], [normal[i][h] for i in range(n)])
                    for c in range(n)
                ]
                entry = self._beta_entry(self.E_amb, self.E_param, Ji, field_coord)
                (rowA if h < k else rowB).append(entry)
            A.append(rowA)
            B.append(rowB)
        got = SymbolicSystem(shape, A, B, C, self.E_param, k, nfree)
        self._normal_cache[d] = got
        return got

    # -- variational quantities -----------------------------------------------------

    def ambient_field_from_variation(self, field) -> list[Expr]:
        """Ortho comps (n expressions) of a variation field."""
        comps = list(field.components)
        if field.frame == "adapted":
            if len(comps) != self.n:
                raise ValueError("adapted-frame field needs n components")
            return comps
        if field.frame == "normal":
            if len(comps) == self.n - self.m:
                tangent = [ZERO] * self.m
                normal = comps
            elif len(comps) == self.n:
                tangent = comps[: self.m]
                normal = comps[self.m :]
            else:
                raise ValueError("normal-frame field needs n-m or n components")
            out = []
            for i in range(self.n):
                acc = ZERO
                for a in range(self.m):
                    acc = acc + tangent[a] * self.E_amb[i][a]
                for j in range(self.n - self.m):
                    acc = acc + normal[j] * self.normal_amb[i][j]
                out.append(acc)
            return out
        raise ValueError(f"unknown variation frame {field.frame!r}")

    def coord_comps(self, ortho_comps) -> list[Expr]:
        return [edot(self.ortho_mat[c], ortho_comps) for c in range(self.n)]

    def div_degree_d_expr(self, field, d: int) -> Expr:
        """Degree-d divergence of a variation field (expression in parameters)."""
        comps = self.ambient_field_from_variation(field)
        coord = self.coord_comps(comps)
        coeffs = self.tangent_coeffs(d)
        E_cols = [[self.E_amb[i][a] for i in range(self.n)] for a in range(self.m)]
        total = ZERO
        for i in range(self.m):
            param_col = [self.E_param[a][i] for a in range(self.m)]
            dV = self.to_ortho_comps(self.nabla_field_along(param_col, coord))
            for J, cJ in coeffs.items():
                mat = []
                for a in range(self.m):
                    row = []
                    for b, jj in enumerate(J):
                        if a == i:
                            row.append(dV[jj - 1])
                        else:
                            row.append(E_cols[a][jj - 1])
                    mat.append(row)
                total = total + cJ * edet(mat)
        return total

    def f_linear_expr(self, field, d: int) -> Expr:
        """f(V) = sum_J <E-wedge, nabla_V X_J> <E-wedge, X_J>."""
        comps = self.ambient_field_from_variation(field)
        coord = self.coord_comps(comps)
        coeffs = self.tangent_coeffs(d)
        E_cols = [[self.E_amb[i][a] for i in range(self.n)] for a in range(self.m)]
        total = ZERO
        for J, cJ in coeffs.items():
            total = total + cJ * self.nabla_simple_mvector_inner(E_cols, coord, J)
        return total

    def mean_curvature_exprs(self, d: int):
        """Per normal field: (H1, H2, H3) expressions of the three summand groups."""
        got = self._mc_cache.get(d)
        if got is not None:
            return got
        n, m = self.n, self.m
        theta = self.theta(d)
        coeffs = self.tangent_coeffs(d)
        E_cols = [[self.E_amb[i][a] for i in range(n)] for a in range(m)]
        out = []
        for jn in range(n - m):
            ncol = [self.normal_amb[i][jn] for i in range(n)]
            ncoord = self.coord_comps(ncol)
            # xi_{i,jn} = <E_1^..(N at slot i)..^E_m, unit degree-d part>
            xs = []
            for i in range(m):
                acc = ZERO
                for J, cJ in coeffs.items():
                    mat = []
                    for a in range(m):
                        row = []
                        for b, jj in enumerate(J):
                            row.append(ncol[jj - 1] if a == i else E_cols[a][jj - 1])
                        mat.append(row)
                    acc = acc + cJ * edet(mat)
                xs.append(div(acc, theta))
            h1 = ZERO
            for i in range(m):
                param_comps = [xs[i] * self.E_param[a][i] for a in range(m)]
                h1 = h1 - self.div_tangent(param_comps)
            h2 = ZERO
            for i in range(m):
                param_col = [self.E_param[a][i] for a in range(m)]
                dN = self.to_ortho_comps(self.nabla_field_along(param_col, ncoord))
                for J, cJ in coeffs.items():
                    mat = []
                    for a in range(m):
                        row = []
                        for b, jj in enumerate(J):
                            row.append(dN[jj - 1] if a == i else E_cols[a][jj - 1])
                        mat.append(row)
                    h2 = h2 + div(cJ, theta) * edet(mat)
            h3 = ZERO
            for J, cJ in coeffs.items():
                h3 = h3 + div(cJ, theta) * self.nabla_simple_mvector_inner(
                    E_cols, ncoord, J
                )
            out.append((h1, h2, h3))
        self._mc_cache[d] = out
        return out

    def graph_extend(self, expr: Expr) -> Expr:
        """Read a parameter expression as an ambient one through the base coordinates."""
        if self.imm.base_coords is None:
            raise DegenerateInputError(
                "immersion has no base-coordinate chart; cannot extend fields"
            )
        from .exprs import var

        mapping = {
            name: var(self.mani.coords[ci])
            for name, ci in zip(self.imm.params, self.imm.base_coords)
        }
        return expr.substitute(mapping)

    def graph_extend_field(self, ortho_comps) -> list[Expr]:
        """Extend a field off M with constant orthonormal-frame components.

        Extending the frame components (rather than the coordinate ones)
        keeps orthonormal frames orthonormal off the surface, which the
        bracket-form curvature identities assume.  Returns ambient
        coordinate components.
        """
        ext = [self.graph_extend(c) for c in ortho_comps]
        F = self.mani.ortho_matrix_exprs
        n = self.n
        return [sum_exprs([F[c][a] * ext[a] for a in range(n)]) for c in range(n)]

    def mean_curvature_bracket_exprs(self, d: int):
        """Bracket form of the curvature components (needs a graph extension)."""
        n, m = self.n, self.m
        theta = self.theta(d)
        coeffs = self.tangent_coeffs(d)
        E_cols = [[self.E_amb[i][a] for i in range(n)] for a in range(m)]
        # xi matrix
        xi = []
        for i in range(m):
            row = []
            for jn in range(n - m):
                ncol = [self.normal_amb[q][jn] for q in range(n)]
                acc = ZERO
                for J, cJ in coeffs.items():
                    mat = []
                    for a in range(m):
                        rr = []
                        for b, jj in enumerate(J):
                            rr.append(ncol[jj - 1] if a == i else E_cols[a][jj - 1])
                        mat.append(rr)
                    acc = acc + cJ * edet(mat)
                row.append(div(acc, theta))
            xi.append(row)
        coords = self.mani.coords
        E_ext = [
            self.graph_extend_field([self.E_amb[q][i] for q in range(n)])
            for i in range(m)
        ]
        N_ext = [
            self.graph_extend_field([self.normal_amb[q][j] for q in range(n)])
            for j in range(n - m)
        ]
        out = []
        for j in range(n - m):
            ncol = [self.normal_amb[i][j] for i in range(n)]
            # div_M(theta N_j - sum_i xi_ij E_i): tangential part is intrinsic,
            # normal part via sum_i <nabla_{E_i} (theta N_j), E_i>.
            tangential = [
                sum_exprs([-xi[i][j] * self.E_param[a][i] for i in range(m)])
                for a in range(m)
            ]
            div_term = self.div_tangent(tangential)
            ncoord = self.coord_comps(ncol)
            theta_ncoord = [theta * c for c in ncoord]
            for i in range(m):
                param_col = [self.E_param[a][i] for a in range(m)]
                dW = self.to_ortho_comps(self.nabla_field_along(param_col, theta_ncoord))
                div_term = div_term + edot(dW, [self.E_amb[q][i] for q in range(n)])
            # N_j(theta) through the graph extension
            theta_ext = self.graph_extend(theta)
            njtheta = self.compose(
                sum_exprs([N_ext[j][c] * theta_ext.diff(coords[c]) for c in range(n)])
            )
            bracket_term = ZERO
            for i in range(m):
                lie = lie_bracket_exprs(E_ext[i], N_ext[j], coords)
                lie_on_m = self.to_ortho_comps([self.compose(c) for c in lie])
                for kk in range(n - m):
                    nk = [self.normal_amb[q][kk] for q in range(n)]
                    bracket_term = bracket_term + xi[i][kk] * edot(lie_on_m, nk)
            out.append(div_term + njtheta + bracket_term)
        return out
