# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled backend for the adaptive triangle quadrature (see _quad_py.py)."""

from libc.math cimport exp, sqrt, fabs
from libc.stdlib cimport malloc, free

BACKEND = "cython"

cdef enum:
    MAXN = 64


cdef struct Ctx:
    double wx, wy, ux, uy, vx, vy, inv_delta
    int n
    double *nodes
    double *wt          # n*n, includes the Duffy xi factor
    long n_rules
    int converged
    int max_depth


cdef double _rule(Ctx *c, double *tri) nogil:
    cdef double v0x = tri[0], v0y = tri[1]
    cdef double e1x = tri[2] - v0x, e1y = tri[3] - v0y
    cdef double e2x = tri[4] - tri[2], e2y = tri[5] - tri[3]
    cdef double jac = fabs(e1x * e2y - e1y * e2x)
    cdef double acc = 0.0, xi, eta, s, t, dx, dy
    cdef int i, j
    for i in range(c.n):
        xi = c.nodes[i]
        for j in range(c.n):
            eta = c.nodes[j]
            s = v0x + xi * (e1x + eta * e2x)
            t = v0y + xi * (e1y + eta * e2y)
            dx = c.wx + t * c.vx - s * c.ux
            dy = c.wy + t * c.vy - s * c.uy
            acc += c.wt[i * c.n + j] * exp(-sqrt(dx * dx + dy * dy) * c.inv_delta)
    return jac * acc


cdef double _adapt(Ctx *c, double *tri, double est, double tol, int depth) nogil:
    cdef double kids[4][6]
    cdef double vals[4]
    cdef double m01x = 0.5 * (tri[0] + tri[2]), m01y = 0.5 * (tri[1] + tri[3])
    cdef double m12x = 0.5 * (tri[2] + tri[4]), m12y = 0.5 * (tri[3] + tri[5])
    cdef double m02x = 0.5 * (tri[0] + tri[4]), m02y = 0.5 * (tri[1] + tri[5])
    cdef int k
    kids[0][0] = tri[0]; kids[0][1] = tri[1]; kids[0][2] = m01x; kids[0][3] = m01y; kids[0][4] = m02x; kids[0][5] = m02y
    kids[1][0] = m01x; kids[1][1] = m01y; kids[1][2] = tri[2]; kids[1][3] = tri[3]; kids[1][4] = m12x; kids[1][5] = m12y
    kids[2][0] = m02x; kids[2][1] = m02y; kids[2][2] = m12x; kids[2][3] = m12y; kids[2][4] = tri[4]; kids[2][5] = tri[5]
    kids[3][0] = m12x; kids[3][1] = m12y; kids[3][2] = m02x; kids[3][3] = m02y; kids[3][4] = m01x; kids[3][5] = m01y
    for k in range(4):
        vals[k] = _rule(c, kids[k])
    c.n_rules += 4
    cdef double refined = vals[0] + vals[1] + vals[2] + vals[3]
    if fabs(refined - est) <= tol:
        return refined
    if depth + 1 >= c.max_depth:
        c.converged = 0
        return refined
    cdef double total = 0.0
    for k in range(4):
        total += _adapt(c, kids[k], vals[k], 0.5 * tol, depth + 1)
    return total


def integrate_triangle(tri, w, u, v, double inv_delta, nodes, weights, double abs_tol, int max_depth):
    """Integrate exp(-|w + t v - s u| * inv_delta) over a triangle in (s, t).

    Returns ``(value, converged, n_rules)``.
    """
    cdef int n = len(nodes)
    if n > MAXN or n < 1:
        raise ValueError("unsupported rule size")
    cdef Ctx c
    cdef double tbuf[6]
    cdef double nbuf[MAXN]
    cdef double *wt = <double *> malloc(n * n * sizeof(double))
    if wt == NULL:
        raise MemoryError()
    cdef int i, j
    cdef double est, total
    try:
        for i in range(n):
            nbuf[i] = nodes[i]
        for i in range(n):
            for j in range(n):
                wt[i * n + j] = weights[i] * weights[j] * nbuf[i]
        for i in range(3):
            tbuf[2 * i] = tri[i][0]
            tbuf[2 * i + 1] = tri[i][1]
        c.wx = w[0]; c.wy = w[1]
        c.ux = u[0]; c.uy = u[1]
        c.vx = v[0]; c.vy = v[1]
        c.inv_delta = inv_delta
        c.n = n
        c.nodes = nbuf
        c.wt = wt
        c.n_rules = 1
        c.converged = 1
        c.max_depth = max_depth
        with nogil:
            est = _rule(&c, tbuf)
            total = _adapt(&c, tbuf, est, abs_tol, 0)
        return total, bool(c.converged), c.n_rules
    finally:
        free(wt)
