"""Shared helpers: closed-form quantities for the ruled Engel graphs."""

import math

import pytest

from gradedgeo import catalog
from gradedgeo.exprs import parse


def engel_forms(theta_src: str, p):
    """Closed-form frame data of a ruled (theta, kappa)-graph at a point."""
    th = parse(theta_src, ["x", "y"])
    env = {"x": float(p[0]), "y": float(p[1])}
    t = th.eval(env)
    tx, ty = th.diff("x").eval(env), th.diff("y").eval(env)
    kappa = math.cos(t) * tx + math.sin(t) * ty
    kap_expr = catalog.engel_graph_kappa(th)
    kx, ky = kap_expr.diff("x").eval(env), kap_expr.diff("y").eval(env)
    x1k = math.cos(t) * kx + math.sin(t) * ky
    x4t = -math.sin(t) * tx + math.cos(t) * ty
    x4k = -math.sin(t) * kx + math.cos(t) * ky
    a1 = math.sqrt(1 + x1k**2)
    a3 = math.sqrt(1 + x4t**2)
    a2 = math.sqrt(a1 * a1 * a3 * a3 + x4k * x4k) / a1
    return {
        "theta": t,
        "kappa": kappa,
        "x1k": x1k,
        "x4t": x4t,
        "x4k": x4k,
        "a1": a1,
        "a2": a2,
        "a3": a3,
    }


@pytest.fixture
def engel_closed_forms():
    return engel_forms
