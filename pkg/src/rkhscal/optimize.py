"""Bracketed scalar minimization."""

from __future__ import annotations

import math

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI2 = (3.0 - math.sqrt(5.0)) / 2.0


def golden_section(f, a: float, b: float, xtol: float = 1e-8, max_iter: int = 500):
    """
    Golden-section search for a minimizer of ``f`` on [a, b].

    Returns ``(x, f(x))`` for the best point seen; the final bracket is no
    wider than ``xtol`` unless ``max_iter`` runs out first.
    """
    a, b = min(a, b), max(a, b)
    best_x, best_f = a, f(a)
    fb = f(b)
    if fb < best_f:
        best_x, best_f = b, fb
    h = b - a
    if h <= xtol:
        return best_x, best_f
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if h <= xtol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            h = b - a
            c = a + INV_PHI2 * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + INV_PHI * h
            fd = f(d)
    for x, fx in ((c, fc), (d, fd)):
        if fx < best_f:
            best_x, best_f = x, fx
    return best_x, best_f
