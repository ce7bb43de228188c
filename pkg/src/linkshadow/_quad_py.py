"""Pure numpy backend for the adaptive triangle quadrature.

Mirrors ``_quad_ext.pyx`` exactly (same subdivision order and acceptance
test) so both backends agree to rounding.
"""

import numpy as np

BACKEND = "python"


def _rule(tri, w, u, v, inv_delta, xi, eta, wt):
    v0x, v0y = tri[0]
    e1x, e1y = tri[1, 0] - v0x, tri[1, 1] - v0y
    e2x, e2y = tri[2, 0] - tri[1, 0], tri[2, 1] - tri[1, 1]
    jac = abs(e1x * e2y - e1y * e2x)
    s = v0x + xi * (e1x + eta * e2x)
    t = v0y + xi * (e1y + eta * e2y)
    dx = w[0] + t * v[0] - s * u[0]
    dy = w[1] + t * v[1] - s * u[1]
    return jac * float(np.sum(wt * np.exp(-np.sqrt(dx * dx + dy * dy) * inv_delta)))


def _children(tri):
    v0, v1, v2 = tri
    m01 = 0.5 * (v0 + v1)
    m12 = 0.5 * (v1 + v2)
    m02 = 0.5 * (v0 + v2)
    return (
        np.array([v0, m01, m02]),
        np.array([m01, v1, m12]),
        np.array([m02, m12, v2]),
        np.array([m12, m02, m01]),
    )


def integrate_triangle(tri, w, u, v, inv_delta, nodes, weights, abs_tol, max_depth):
    """Integrate exp(-|w + t v - s u| * inv_delta) over a triangle in (s, t).

    The triangle is Duffy-collapsed onto its first vertex, so a kernel
    kink located at that vertex is integrated at full order.

    Returns ``(value, converged, n_rules)``.
    """
    tri = np.asarray(tri, dtype=float)
    w = np.asarray(w, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    xi = nodes[:, None]
    eta = nodes[None, :]
    wt = np.outer(weights, weights) * xi

    n_rules = 1
    converged = True
    parent = _rule(tri, w, u, v, inv_delta, xi, eta, wt)
    total = 0.0
    # depth-first, children pushed in reverse so they are visited in order
    stack = [(tri, parent, abs_tol, 0)]
    while stack:
        t, est, tol, depth = stack.pop()
        kids = _children(t)
        vals = [_rule(k, w, u, v, inv_delta, xi, eta, wt) for k in kids]
        n_rules += 4
        refined = vals[0] + vals[1] + vals[2] + vals[3]
        if abs(refined - est) <= tol:
            total += refined
        elif depth + 1 >= max_depth:
            converged = False
            total += refined
        else:
            for k in (3, 2, 1, 0):
                stack.append((kids[k], vals[k], 0.5 * tol, depth + 1))
    return total, converged, n_rules
