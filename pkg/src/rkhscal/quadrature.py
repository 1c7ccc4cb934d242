"""Composite Gauss-Legendre rules on boxes, with optional panel breaks at kinks."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def _legendre(nodes: int):
    x, w = np.polynomial.legendre.leggauss(nodes)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre nodes per panel and uniform panels per axis."""

    nodes_per_panel: int = 64
    panels: int = 8

    def __post_init__(self):
        if self.nodes_per_panel < 1 or self.panels < 1:
            raise ValueError("quadrature rule needs at least one node and one panel")

    @classmethod
    def for_dim(cls, dim: int) -> "QuadratureRule":
        # tensor rules grow as (nodes * panels)^d; keep d >= 2 affordable
        return cls() if dim == 1 else cls(16, 4)

    def edges(self, lower: float, upper: float, breakpoints=()) -> np.ndarray:
        e = np.linspace(lower, upper, self.panels + 1)
        bp = np.asarray(list(breakpoints), dtype=float)
        bp = bp[(bp > lower) & (bp < upper)]
        return np.unique(np.concatenate([e, bp]))


def panel_nodes(edges, nodes: int):
    """
    Nodes and weights of a composite rule over consecutive panels.

    ``edges`` may carry a leading batch axis, shape (..., E); the result then has
    shape (..., (E - 1) * nodes).  Degenerate panels get zero weight.
    """
    x, w = _legendre(nodes)
    edges = np.asarray(edges, dtype=float)
    a = edges[..., :-1, None]
    b = edges[..., 1:, None]
    half = 0.5 * (b - a)
    pts = half * x + 0.5 * (a + b)
    wts = half * w
    shape = edges.shape[:-1] + (-1,)
    return pts.reshape(shape), wts.reshape(shape)


def line_rule(lower: float, upper: float, rule: QuadratureRule, breakpoints=()):
    return panel_nodes(rule.edges(lower, upper, breakpoints), rule.nodes_per_panel)


def split_line_rule(lower: float, upper: float, cuts, rule: QuadratureRule, breakpoints=()):
    """
    Per-cut composite rules on [lower, upper]: row i has an extra panel break at cuts[i].

    Every row has the same node count, so the result is a dense (len(cuts), N) array.
    """
    cuts = np.clip(np.asarray(cuts, dtype=float).ravel(), lower, upper)
    base = rule.edges(lower, upper, breakpoints)
    edges = np.sort(np.concatenate([np.broadcast_to(base, (cuts.size, base.size)), cuts[:, None]], axis=1), axis=1)
    return panel_nodes(edges, rule.nodes_per_panel)


def lower_triangle_rule(lower: float, upper: float, cuts, rule: QuadratureRule, breakpoints=()):
    """Per-cut composite rules on [lower, cuts[i]] using the static breaks below each cut."""
    cuts = np.clip(np.asarray(cuts, dtype=float).ravel(), lower, upper)
    base = rule.edges(lower, upper, breakpoints)
    edges = np.minimum(base[None, :], cuts[:, None])
    return panel_nodes(edges, rule.nodes_per_panel)


def box_rule(lower, upper, rule: QuadratureRule):
    """Tensor-product composite rule on an axis-aligned box; returns (N, d) nodes and (N,) weights."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    axes = [line_rule(lo, hi, rule) for lo, hi in zip(lower, upper)]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return pts, wts
