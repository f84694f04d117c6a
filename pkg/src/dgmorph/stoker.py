"""Exact clear-water fixed-bed dam-break solution (verification oracle).

Still initial states (u = 0) with depths (h_left, h_right), h_left > 0.
For h_right > 0 the solution is a left rarefaction and a right shock; for
h_right = 0 a rarefaction into vacuum with front speed 2 sqrt(g h_left).
Self-similar in xi = x / t.
"""

import numpy as np


def _middle_depth(hl, hr, g, tol=1e-12, max_iter=200):
    """Depth between the rarefaction and the shock.

    Matching condition for still initial states:
        2 (sqrt(g hl) - sqrt(g hm)) = (hm - hr) sqrt(g/2 (hm + hr)/(hm hr))
    Solved by bisection tightened with Newton; hm lies in (hr, hl).
    """
    cl = np.sqrt(g * hl)

    def f(hm):
        return (
            2.0 * (cl - np.sqrt(g * hm))
            - (hm - hr) * np.sqrt(0.5 * g * (hm + hr) / (hm * hr))
        )

    lo, hi = hr, hl
    hm = 0.5 * (lo + hi)
    for _ in range(max_iter):
        val = f(hm)
        if val > 0.0:
            lo = hm
        else:
            hi = hm
        # Newton step from a centered difference, clipped into the bracket
        eps = 1e-8 * hm
        dval = (f(hm + eps) - f(hm - eps)) / (2.0 * eps)
        if dval != 0.0:
            hn = hm - val / dval
            hm = hn if lo < hn < hi else 0.5 * (lo + hi)
        else:
            hm = 0.5 * (lo + hi)
        if hi - lo < tol * hl and abs(val) < tol * max(1.0, cl):
            return hm
    assert abs(f(hm)) < 1e-9 * max(1.0, cl), "middle-state iteration stalled"
    return hm


def stoker_exact(h_left, h_right, g, xi):
    """Exact depth and velocity at similarity coordinates xi = x / t.

    Returns (h, u) arrays matching the shape of xi.
    """
    if h_left <= 0.0:
        raise ValueError("h_left must be positive")
    if h_right < 0.0:
        raise ValueError("h_right must be non-negative")
    xi = np.asarray(xi, dtype=float)
    h = np.empty_like(xi)
    u = np.zeros_like(xi)
    cl = np.sqrt(g * h_left)

    if h_right == h_left:
        h[...] = h_left
        return h, u

    if h_right == 0.0:
        head = -cl
        front = 2.0 * cl
        fan = (xi >= head) & (xi <= front)
        h[xi < head] = h_left
        h[xi > front] = 0.0
        h[fan] = (2.0 * cl - xi[fan]) ** 2 / (9.0 * g)
        u[fan] = 2.0 / 3.0 * (xi[fan] + cl)
        return h, u

    hm = _middle_depth(h_left, h_right, g)
    cm = np.sqrt(g * hm)
    um = 2.0 * (cl - cm)
    shock_speed = um * hm / (hm - h_right)

    h[...] = h_right
    left = xi < -cl
    fan = (xi >= -cl) & (xi <= um - cm)
    mid = (xi > um - cm) & (xi < shock_speed)
    h[left] = h_left
    h[fan] = (2.0 * cl - xi[fan]) ** 2 / (9.0 * g)
    u[fan] = 2.0 / 3.0 * (xi[fan] + cl)
    h[mid] = hm
    u[mid] = um
    return h, u


def stoker_shock_speed(h_left, h_right, g):
    """Shock position per unit time for the wet-bed case."""
    hm = _middle_depth(h_left, h_right, g)
    um = 2.0 * (np.sqrt(g * h_left) - np.sqrt(g * hm))
    return um * hm / (hm - h_right)
