"""Built-in graded manifolds and immersions used as the regression suite.

Entries
-------
``h1xh1``
    Product of two three-dimensional Heisenberg structures on R^6,
    coordinates (x, y, z, xp, yp, zp), growth (4, 6).  The metric makes the
    four horizontal fields orthonormal and gives the two vertical fields
    squared lengths ``lam`` and ``mu``.
``rototrans``
    Contact structure on R^2 x S^1: X = cos(t) dx + sin(t) dy, Y = d/dt,
    growth (2, 3).  Hypersurfaces away from singular points have degree 3.
``engel-structure``
    R^2 x S^1 x R with X1 = cos(t) dx + sin(t) dy + k dt, X2 = d/dk,
    growth (2, 3, 4).  Ruled graphs satisfying the ruling condition
    kappa = X1(theta) have pure degree 4.
``engel-group``
    Polynomial Engel structure on R^4; hosts the rigid plane of degree 3.

Immersions: ``h1xh1-surface`` (s, t) -> (s, 0, u(s), 0, t, u(s)),
``rt-graph`` theta = u(x, y), ``engel-graph`` (theta, kappa)-graph with
kappa derived from theta so the ruling condition holds exactly, and
``isolated-plane`` (v, w) -> (v, 0, w, 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exprs import Expr, call, const, parse, var
from .manifold import AdaptedFrame, Manifold, MetricField
from .multivec import GrowthVector
from .immersion import Immersion

__all__ = [
    "CatalogEntry",
    "builtin",
    "names",
    "manifold",
    "immersion",
    "engel_graph_kappa",
    "isolated_plane_probe",
    "contact_area_density",
    "contact_mean_curvature_exprs",
    "engel_el_residual_exprs",
    "engel_theta_gradient_expr",
]


@dataclass
class CatalogEntry:
    name: str
    kind: str  # "manifold" or "immersion"
    summary: str
    parameters: dict = field(default_factory=dict)
    reference_values: dict = field(default_factory=dict)


_MANIFOLDS = {
    "h1xh1": "product of two Heisenberg structures, growth (4, 6)",
    "rototrans": "contact structure on R^2 x S^1, growth (2, 3)",
    "engel-structure": "ruled-surface Engel structure, growth (2, 3, 4)",
    "engel-group": "polynomial Engel structure on R^4, growth (2, 3, 4)",
}

_IMMERSIONS = {
    "h1xh1-surface": "(s,t) -> (s, 0, u(s), 0, t, u(s)); singular where u_s = 0",
    "rt-graph": "graph theta = u(x, y); degree 3 away from singular points",
    "engel-graph": "(theta, kappa)-graph with kappa = X1(theta); pure degree 4",
    "isolated-plane": "(v, w) -> (v, 0, w, 0); degree 3, not strongly regular",
}


def names() -> list[str]:
    return sorted(_MANIFOLDS) + sorted(_IMMERSIONS)


def builtin(name: str) -> CatalogEntry:
    if name in _MANIFOLDS:
        return CatalogEntry(name, "manifold", _MANIFOLDS[name])
    if name in _IMMERSIONS:
        refs = {}
        if name == "engel-graph":
            refs = {
                "area_integrand_frame_metric": "sqrt(1 + X1(kappa)^2)",
                "area_integrand_euclidean": "sqrt(1 + kappa^2 + X1(kappa)^2)",
                "degree": 4,
            }
        elif name == "rt-graph":
            refs = {"area_integrand": "sqrt(1 + X(u)^2)", "degree": 3}
        elif name == "isolated-plane":
            refs = {"degree": 3, "strongly_regular": False}
        elif name == "h1xh1-surface":
            refs = {"degree": 3, "area_integrand": "abs(u_s)*sqrt(lam + mu)"}
        return CatalogEntry(name, "immersion", _IMMERSIONS[name], reference_values=refs)
    raise KeyError(f"unknown catalog entry {name!r}; known: {', '.join(names())}")


# ---------------------------------------------------------------------------
# Manifolds
# ---------------------------------------------------------------------------

def _h1xh1_frame() -> AdaptedFrame:
    coords = ("x", "y", "z", "xp", "yp", "zp")
    zero = const(0.0)
    x, y, xp, yp = (var(c) for c in ("x", "y", "xp", "yp"))
    half = const(0.5)
    fields = [
        (const(1.0), zero, -half * y, zero, zero, zero),  # X
        (zero, const(1.0), half * x, zero, zero, zero),  # Y
        (zero, zero, zero, const(1.0), zero, -half * yp),  # X'
        (zero, zero, zero, zero, const(1.0), half * xp),  # Y'
        (zero, zero, const(1.0), zero, zero, zero),  # Z
        (zero, zero, zero, zero, zero, const(1.0)),  # Z'
    ]
    return AdaptedFrame(coords, fields, GrowthVector((4, 6)))


def _rototrans_frame() -> AdaptedFrame:
    coords = ("x", "y", "theta")
    zero = const(0.0)
    th = var("theta")
    fields = [
        (call("cos", th), call("sin", th), zero),  # X
        (zero, zero, const(1.0)),  # Y
        (call("sin", th), -call("cos", th), zero),  # T = [X, Y]
    ]
    return AdaptedFrame(coords, fields, GrowthVector((2, 3)))


def _engel_structure_frame() -> AdaptedFrame:
    coords = ("x", "y", "theta", "k")
    zero = const(0.0)
    th, k = var("theta"), var("k")
    fields = [
        (call("cos", th), call("sin", th), k, zero),  # X1
        (zero, zero, zero, const(1.0)),  # X2
        (zero, zero, -const(1.0), zero),  # X3 = [X1, X2]
        (-call("sin", th), call("cos", th), zero, zero),  # X4 = [X1, X3]
    ]
    return AdaptedFrame(coords, fields, GrowthVector((2, 3, 4)))


def _engel_group_frame() -> AdaptedFrame:
    coords = ("x1", "x2", "x3", "x4")
    zero = const(0.0)
    one = const(1.0)
    x1, x3 = var("x1"), var("x3")
    fields = [
        (one, zero, zero, zero),  # X1
        (zero, one, x1, x3),  # X2
        (zero, zero, one, zero),  # X3
        (zero, zero, zero, one),  # X4
    ]
    return AdaptedFrame(coords, fields, GrowthVector((2, 3, 4)))


def manifold(name: str, metric: str = "default", lam: float = 1.0, mu: float = 1.0) -> Manifold:
    """Instantiate a catalog manifold, optionally overriding the metric.

    ``metric`` is one of "default", "frame-orthonormal", "euclidean".
    ``lam``/``mu`` are the vertical squared lengths for ``h1xh1``.
    """
    if name == "h1xh1":
        frame = _h1xh1_frame()
        if metric in ("default", "frame-diagonal"):
            mf = MetricField.frame_diagonal((1.0, 1.0, 1.0, 1.0, lam, mu))
        elif metric == "frame-orthonormal":
            mf = MetricField.frame_orthonormal()
        elif metric == "euclidean":
            mf = MetricField.euclidean(6)
        else:
            raise ValueError(f"unsupported metric {metric!r} for h1xh1")
    elif name in ("rototrans", "engel-structure", "engel-group"):
        frame = {
            "rototrans": _rototrans_frame,
            "engel-structure": _engel_structure_frame,
            "engel-group": _engel_group_frame,
        }[name]()
        if metric in ("default", "frame-orthonormal"):
            mf = MetricField.frame_orthonormal()
        elif metric == "euclidean":
            mf = MetricField.euclidean(frame.n)
        else:
            raise ValueError(f"unsupported metric {metric!r} for {name}")
    else:
        raise KeyError(f"unknown catalog manifold {name!r}")
    return Manifold(frame, mf, name=name)


# ---------------------------------------------------------------------------
# Immersions
# ---------------------------------------------------------------------------

def _as_expr(value, names) -> Expr:
    if isinstance(value, Expr):
        return value
    return parse(str(value), names)


def engel_graph_kappa(theta: Expr) -> Expr:
    """kappa = X1(theta) = cos(theta) theta_x + sin(theta) theta_y."""
    return call("cos", theta) * theta.diff("x") + call("sin", theta) * theta.diff("y")


def immersion(name: str, domain=None, metric: str = "default", lam: float = 1.0,
              mu: float = 1.0, **params) -> Immersion:
    """Instantiate a catalog immersion.

    ``engel-graph`` takes ``theta`` (expression in x, y); the second graph
    function is always derived as kappa = X1(theta) so the ruling condition
    holds exactly.  ``rt-graph`` takes ``u`` in (x, y); ``h1xh1-surface``
    takes ``u`` in (s,) (the surface construction needs u independent of t).
    """
    if name == "engel-graph":
        theta = _as_expr(params.pop("theta", "0.2*x + 0.3*y"), ("x", "y"))
        kappa = engel_graph_kappa(theta)
        mani = manifold("engel-structure", metric=metric)
        dom = domain or ((0.0, 1.0), (0.0, 1.0))
        return Immersion(
            mani,
            ("x", "y"),
            (var("x"), var("y"), theta, kappa),
            dom,
            base_coords=(0, 1),
            name="engel-graph",
        )
    if name == "rt-graph":
        u = _as_expr(params.pop("u", "x"), ("x", "y"))
        mani = manifold("rototrans", metric=metric)
        dom = domain or ((0.0, 1.0), (0.0, 1.0))
        return Immersion(
            mani,
            ("x", "y"),
            (var("x"), var("y"), u),
            dom,
            base_coords=(0, 1),
            name="rt-graph",
        )
    if name == "h1xh1-surface":
        u = _as_expr(params.pop("u", "s"), ("s", "t"))
        if "t" in u.variables():
            raise ValueError("h1xh1-surface needs u = u(s); see the catalog docs")
        mani = manifold("h1xh1", metric=metric, lam=lam, mu=mu)
        dom = domain or ((-1.0, 1.0), (-1.0, 1.0))
        return Immersion(
            mani,
            ("s", "t"),
            (var("s"), const(0.0), u, const(0.0), var("t"), u),
            dom,
            base_coords=(0, 4),
            name="h1xh1-surface",
        )
    if name == "isolated-plane":
        mani = manifold("engel-group", metric=metric)
        dom = domain or ((-1.0, 1.0), (-1.0, 1.0))
        return Immersion(
            mani,
            ("v", "w"),
            (var("v"), const(0.0), var("w"), const(0.0)),
            dom,
            base_coords=(0, 2),
            name="isolated-plane",
        )
    raise KeyError(f"unknown catalog immersion {name!r}")


# ---------------------------------------------------------------------------
# Structure-specific checks
# ---------------------------------------------------------------------------

def isolated_plane_probe(phi: Expr, psi: Expr, grid_points: np.ndarray) -> dict:
    """Residuals of the degree-3 constraint system for plane perturbations.

    A compactly supported perturbation (v, w) -> (v, phi, w, psi) keeps
    degree 3 only if {psi_w + w phi_w, phi_v psi_w - psi_v phi_w,
    v (phi_v psi_w - psi_v phi_w) - (psi_v + w phi_v)} all vanish; for any
    nonzero pair some constraint fails somewhere, which is how the plane's
    rigidity shows up numerically.
    """
    from .exprs import evaluate_many

    v, w = var("v"), var("w")
    phi_v, phi_w = phi.diff("v"), phi.diff("w")
    psi_v, psi_w = psi.diff("v"), psi.diff("w")
    cross = phi_v * psi_w - psi_v * phi_w
    constraints = (
        psi_w + w * phi_w,
        cross,
        v * cross - (psi_v + w * phi_v),
    )
    pts = np.asarray(grid_points, dtype=float)
    env = {"v": pts[:, 0], "w": pts[:, 1]}
    vals = evaluate_many(constraints, env)
    res = [float(np.max(np.abs(np.broadcast_to(val, (pts.shape[0],))))) for val in vals]
    return {
        "max_residual": max(res),
        "per_constraint": res,
        "trivial": max(res) == 0.0,
    }


def contact_area_density(u: Expr) -> Expr:
    """Closed-form degree-3 area integrand for rt-graphs: sqrt(1 + X(u)^2)."""
    xu = call("cos", u) * u.diff("x") + call("sin", u) * u.diff("y")
    return call("sqrt", const(1.0) + xu * xu)


def contact_mean_curvature_exprs(imm: Immersion):
    """Contact-side curvature of an rt-graph: -div^h_Sigma(nu_h) + <[nu_h, T], T>.

    ``nu_h`` is the normalized horizontal projection of the unit normal
    built from the graph function; the divergence runs over the horizontal
    tangent frame fields only.  Returns (H expression in (x, y), coordinate
    components of the unit graph normal); the scalar is the curvature along
    the normal opposite to the gradient of u - theta.
    """
    from .moving_frames import ImmersionFrames
    from .manifold import lie_bracket_exprs
    from .symmat import edot

    if imm.name != "rt-graph":
        raise ValueError("contact curvature is defined for rt-graph immersions")
    frames = ImmersionFrames(imm)
    n, m = imm.n, imm.m
    u = imm.components[2]
    xu = call("cos", u) * u.diff("x") + call("sin", u) * u.diff("y")
    tu = call("sin", u) * u.diff("x") - call("cos", u) * u.diff("y")
    norm_grad = call("sqrt", const(1.0) + xu * xu + tu * tu)
    # unit normal in ortho frame comps (X, Y, T): (X(u), -1, T(u)) / |...|
    n_comps = [xu / norm_grad, -const(1.0) / norm_grad, tu / norm_grad]
    nh_norm = call("sqrt", xu * xu + const(1.0)) / norm_grad
    nu_h = [xu / (norm_grad * nh_norm), -const(1.0) / (norm_grad * nh_norm), const(0.0)]
    nu_coord = frames.coord_comps(nu_h)
    horizontal_count = frames.flag_dims[0]
    div_h = const(0.0)
    for i in range(horizontal_count):
        param_col = [frames.E_param[a][i] for a in range(m)]
        dnu = frames.to_ortho_comps(frames.nabla_field_along(param_col, nu_coord))
        div_h = div_h + edot(dnu, [frames.E_amb[q][i] for q in range(n)])
    # bracket term via the graph extension (frame components held constant)
    nu_ext = frames.graph_extend_field(nu_h)
    t_field = [list(f) for f in imm.manifold.frame.fields][2]
    lie = lie_bracket_exprs(nu_ext, t_field, imm.manifold.coords)
    lie_on_m = frames.to_ortho_comps([frames.compose(c) for c in lie])
    bracket_term = lie_on_m[2]  # <[nu_h, T], T> with T the third ortho field
    return -div_h + bracket_term, n_comps


def engel_el_residual_exprs(imm: Immersion):
    """Third-order stationarity residual for Engel graphs.

    Returns (residual, control_density) where ``residual`` pairs with the
    free normal component against the induced measure: for admissible
    normal fields built from a free function psi the first variation equals
    the integral of residual * psi * sqrt(det mu).  ``control_density`` is
    the coefficient a of the control component in the normalized first-order
    admissibility equation (positive on ruled graphs).
    """
    from .variation import critical_residual_exprs

    if imm.name != "engel-graph":
        raise ValueError("the third-order residual is specific to engel-graph")
    res = critical_residual_exprs(imm, 4)
    if len(res.vert) != 1:
        raise RuntimeError("unexpected normal splitting for engel-graph")
    return res.vert[0], res.control_scale


def engel_theta_gradient_expr(imm: Immersion):
    """Pairing density for graph perturbations theta -> theta + t psi.

    d/dt A_4 = integral of (gradient * psi) over the parameter box, so one
    explicit descent step uses theta - tau * gradient (cut off near the
    boundary).  Derived from the curvature pairing with the variation field
    V = -psi X3 + (X1bar(psi) + X4bar(theta) psi) X2 and integration by
    parts in the plane.
    """
    from .moving_frames import ImmersionFrames
    from .variation import mean_curvature_field_exprs

    if imm.name != "engel-graph":
        raise ValueError("theta gradient is specific to engel-graph")
    frames = ImmersionFrames(imm)
    comps = mean_curvature_field_exprs(imm, 4)  # ortho-frame comps of H
    theta = imm.components[2]
    cos_t, sin_t = call("cos", theta), call("sin", theta)
    omega = frames.sqrt_detmu
    h_x2 = comps[1]
    h_x3 = comps[2]
    # gradient = -omega <H, X3> - X1bar(omega <H, X2>)
    g = omega * h_x2
    x1bar_g = cos_t * g.diff("x") + sin_t * g.diff("y")
    return -omega * h_x3 - x1bar_g
