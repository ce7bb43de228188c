"""Shadowing variance, link-pair covariance and correlation from the loss field.

Kernel convention
-----------------
The spatial loss field has covariance ``R(r) = sigma_x2 / (2 delta) * exp(-r / delta)``
and link shadowing is the field's line integral divided by the square root of
the link length. With the ``1/(2 delta)`` prefactor the single-link variance is
exactly ``sigma_x2 * (1 + (delta/d) exp(-d/delta) - delta/d)`` and tends to
``sigma_x2`` for long links. A ``1/delta`` prefactor would double every
variance and covariance; correlation coefficients do not depend on the choice.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import ArgumentError, DomainError, NumericError
from .geometry import Deployment, Link, LinkPairGeometry, enumerate_links

Point = np.ndarray
Segment = tuple


@dataclass(frozen=True)
class ShadowingParams:
    """Loss-field parameters.

    ``sigma_db2`` is the total fading variance; the non-shadow part is
    ``sigma_db2 - sigma_x2``.
    """

    delta_m: float
    sigma_x2: float
    sigma_db2: float

    def __post_init__(self):
        if not self.delta_m > 0:
            raise ArgumentError("space constant delta must be positive")
        if not (0 <= self.sigma_x2 <= self.sigma_db2) or not self.sigma_db2 > 0:
            raise ArgumentError("need 0 <= sigma_x2 <= sigma_db2 and sigma_db2 > 0")

    @property
    def sigma_y2(self) -> float:
        return self.sigma_db2 - self.sigma_x2

    @property
    def ratio(self) -> float:
        return self.sigma_x2 / self.sigma_db2

    @property
    def kernel_prefactor(self) -> float:
        return self.sigma_x2 / (2.0 * self.delta_m)

    @classmethod
    def from_ratio(cls, delta_m, ratio, sigma_db2):
        return cls(delta_m, ratio * sigma_db2, sigma_db2)


@dataclass(frozen=True)
class QuadratureSpec:
    points_per_subsegment: int = 16
    max_subdivisions: int = 12
    rel_tol: float = 1e-6

    def __post_init__(self):
        if self.points_per_subsegment < 2:
            raise ArgumentError("need at least 2 quadrature points")
        if not self.rel_tol > 0:
            raise ArgumentError("rel_tol must be positive")
        if self.max_subdivisions < 1:
            raise ArgumentError("max_subdivisions must be >= 1")

    def rule(self):
        return _gauss_legendre_01(self.points_per_subsegment)


DEFAULT_QUADRATURE = QuadratureSpec()


@lru_cache(maxsize=None)
def _gauss_legendre_01(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def link_variance_closed_form(sp: ShadowingParams, d: float) -> float:
    if not d > 0:
        raise DomainError("link length must be positive")
    r = sp.delta_m / d
    # expm1 keeps the short-link limit accurate
    return sp.sigma_x2 * (1.0 - r * -math.expm1(-d / sp.delta_m))


# -- parameter-plane decomposition ---------------------------------------------


def _as_segment(seg) -> tuple[np.ndarray, np.ndarray]:
    p0 = np.asarray(seg[0], dtype=float)
    p1 = np.asarray(seg[1], dtype=float)
    if p0.shape != (2,) or p1.shape != (2,):
        raise ArgumentError("segments are pairs of 2-D points")
    if not np.all(np.isfinite(p0)) or not np.all(np.isfinite(p1)):
        raise ArgumentError("segment endpoints must be finite")
    if math.hypot(*(p1 - p0)) <= 0.0:
        raise ArgumentError("segment has zero length")
    return p0, p1


def _cross(a, b):
    return a[0] * b[1] - a[1] * b[0]


def _clip(poly, coef, c0, keep_positive):
    """Clip a convex polygon to ``sign * (coef . x - c0) >= 0``."""
    sign = 1.0 if keep_positive else -1.0
    out = []
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        gp = sign * (coef @ p - c0)
        gq = sign * (coef @ q - c0)
        if gp >= 0:
            out.append(p)
        if (gp > 0 > gq) or (gp < 0 < gq):
            lam = gp / (gp - gq)
            out.append(p + lam * (q - p))
    return out


def _fan(poly, apex_index=0):
    n = len(poly)
    tris = []
    for k in range(1, n - 1):
        i1 = (apex_index + k) % n
        i2 = (apex_index + k + 1) % n
        tri = np.array([poly[apex_index], poly[i1], poly[i2]])
        if abs(_cross(tri[1] - tri[0], tri[2] - tri[0])) > 0.0:
            tris.append(tri)
    return tris


def _closest_params(a, b, w, u, v):
    """Parameters (s, t) minimising |w + t v - s u| on [0,a] x [0,b]."""
    den = _cross(u, v)
    if abs(den) > 1e-12:
        # w + t v - s u = 0
        s = _cross(w, v) / den
        t = _cross(w, u) / den
        if -1e-12 * a <= s <= a * (1 + 1e-12) and -1e-12 * b <= t <= b * (1 + 1e-12):
            return min(max(s, 0.0), a), min(max(t, 0.0), b)
    cands = []
    for s in (0.0, a):
        t = min(max(float((s * u - w) @ v), 0.0), b)
        cands.append((s, t))
    for t in (0.0, b):
        s = min(max(float((w + t * v) @ u), 0.0), a)
        cands.append((s, t))
    return min(cands, key=lambda st: float(np.hypot(*(w + st[1] * v - st[0] * u))))


def _snap(x, lo, hi):
    span = hi - lo
    if abs(x - lo) <= 1e-12 * span:
        return lo
    if abs(x - hi) <= 1e-12 * span:
        return hi
    return x


def parameter_pieces(seg_a, seg_b):
    """Split the (s, t) rectangle into triangles on which the kernel is smooth.

    Returns ``(triangles, w, u, v, a, b)`` where the distance between the
    points at arc lengths s on A and t on B is ``|w + t v - s u|``. Each
    triangle's first vertex is where a kink (if any) touches it.
    """
    p0, p1 = _as_segment(seg_a)
    q0, q1 = _as_segment(seg_b)
    a = float(math.hypot(*(p1 - p0)))
    b = float(math.hypot(*(q1 - q0)))
    u = (p1 - p0) / a
    v = (q1 - q0) / b
    w = q0 - p0
    scale = max(a, b, float(np.hypot(*w)))
    rect = [np.array([0.0, 0.0]), np.array([a, 0.0]), np.array([a, b]), np.array([0.0, b])]

    if abs(_cross(u, v)) <= 1e-12 and abs(_cross(w, u)) <= 1e-12 * scale:
        # collinear: kink along s - sigma t = c
        sigma = float(u @ v)
        c0 = float(w @ u)
        coef = np.array([1.0, -sigma])
        tris = []
        for keep in (True, False):
            poly = _clip(rect, coef, c0, keep)
            if len(poly) < 3:
                continue
            on_line = [k for k, p in enumerate(poly) if abs(coef @ p - c0) <= 1e-12 * scale]
            tris.extend(_fan(poly, on_line[0] if on_line else 0))
        return tris, w, u, v, a, b

    s0, t0 = _closest_params(a, b, w, u, v)
    s0, t0 = _snap(s0, 0.0, a), _snap(t0, 0.0, b)
    apex = np.array([s0, t0])
    tris = []
    for s_far in (0.0, a):
        if s_far == s0:
            continue
        for t_far in (0.0, b):
            if t_far == t0:
                continue
            tris.append(np.array([apex, [s_far, t0], [s_far, t_far]]))
            tris.append(np.array([apex, [s_far, t_far], [s0, t_far]]))
    return tris, w, u, v, a, b


def double_line_integral(seg_a, seg_b, delta: float, q: QuadratureSpec = DEFAULT_QUADRATURE):
    """Unnormalised ``integral_A integral_B exp(-|beta - alpha| / delta)`` (m^2)."""
    if not delta > 0:
        raise DomainError("delta must be positive")
    tris, w, u, v, a, b = parameter_pieces(seg_a, seg_b)
    nodes, weights = q.rule()
    inv_delta = 1.0 / delta
    # coarse pass sets the absolute tolerance
    coarse = [kernels.integrate_triangle(t, w, u, v, inv_delta, nodes, weights, math.inf, 1)[0] for t in tris]
    rough = abs(sum(coarse))
    tol = q.rel_tol * rough / max(len(tris), 1)
    total = 0.0
    ok = True
    for t in tris:
        val, converged, _ = kernels.integrate_triangle(
            t, w, u, v, inv_delta, nodes, weights, tol, q.max_subdivisions
        )
        total += val
        ok = ok and converged
    if not ok:
        raise NumericError(
            f"quadrature did not reach rel_tol={q.rel_tol:g} within {q.max_subdivisions} subdivisions",
            estimate=total,
        )
    return total


def _length(seg) -> float:
    p0, p1 = _as_segment(seg)
    return float(math.hypot(*(p1 - p0)))


def link_cov_numeric(sp: ShadowingParams, seg_a, seg_b, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Cov(X_a, X_b) in dB^2 for links along ``seg_a`` and ``seg_b``."""
    integral = double_line_integral(seg_a, seg_b, sp.delta_m, q)
    return sp.kernel_prefactor * integral / math.sqrt(_length(seg_a) * _length(seg_b))


def link_variance_numeric(sp: ShadowingParams, seg, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    return link_cov_numeric(sp, seg, seg, q)


def _unit_params(delta):
    return ShadowingParams(delta, 1.0, 1.0)


def shadowing_corr(sp: ShadowingParams, seg_a, seg_b, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Shadowing correlation rho_X; all three terms use the same quadrature."""
    unit = _unit_params(sp.delta_m)
    cov = link_cov_numeric(unit, seg_a, seg_b, q)
    va = link_variance_numeric(unit, seg_a, q)
    vb = link_variance_numeric(unit, seg_b, q)
    return float(np.clip(cov / math.sqrt(va * vb), -1.0, 1.0))


def shadowing_corr_approx(sp: ShadowingParams, seg_a, seg_b, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Cov(X_a, X_b) / sigma_x2, i.e. rho_X with both link variances set to sigma_x2.

    Equals ``shadowing_corr * sqrt(Var_a Var_b) / sigma_x2``, so it is always
    below the exact coefficient for finite links.
    """
    return link_cov_numeric(_unit_params(sp.delta_m), seg_a, seg_b, q)


def total_fading_corr(sp: ShadowingParams, rho_x: float, same_link: bool = False) -> float:
    """rho_Z for two links given their shadowing correlation."""
    if abs(rho_x) > 1.0:
        raise ArgumentError("|rho_x| must not exceed 1")
    if same_link:
        return 1.0
    return sp.ratio * rho_x


def total_fading_corr_exact(sp: ShadowingParams, seg_a, seg_b, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """rho_Z = Cov(X_a, X_b) / sigma_db2, keeping the finite-length variances."""
    return link_cov_numeric(sp, seg_a, seg_b, q) / sp.sigma_db2


def geometry_cov(sp: ShadowingParams, g: LinkPairGeometry, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    sa, sb = g.segments()
    return link_cov_numeric(sp, sa, sb, q)


def geometry_corr(sp: ShadowingParams, g: LinkPairGeometry, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    sa, sb = g.segments()
    return shadowing_corr(sp, sa, sb, q)


def covariance_matrix(
    dep: Deployment,
    sp: ShadowingParams,
    q: QuadratureSpec = DEFAULT_QUADRATURE,
    links: list[Link] | None = None,
    workers: int | None = None,
):
    """Total-fading covariance over links (dB^2).

    Diagonal entries are ``sigma_db2``; off-diagonal entries are the shadowing
    covariances, since non-shadow fading is independent across links. Pairs
    with congruent geometry are integrated once, from the first pair of the
    class in link order, so the result does not depend on thread scheduling.

    Returns ``(matrix, links)``.
    """
    links = enumerate_links(dep) if links is None else list(links)
    n = len(links)
    mat = np.zeros((n, n))
    np.fill_diagonal(mat, sp.sigma_db2)
    if n < 2 or sp.sigma_x2 == 0.0:
        return mat, links

    classes: dict[tuple, list[tuple[int, int]]] = {}
    reps: dict[tuple, LinkPairGeometry] = {}
    for ia in range(n):
        for ib in range(ia + 1, n):
            g = LinkPairGeometry.from_links(dep, links[ia], links[ib])
            key = g.key()
            if key not in reps:
                reps[key] = g
                classes[key] = []
            classes[key].append((ia, ib))

    keys = list(reps)

    def work(key):
        return geometry_cov(sp, reps[key], q)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(work, keys))
    else:
        values = [work(k) for k in keys]
    for key, val in zip(keys, values):
        for ia, ib in classes[key]:
            mat[ia, ib] = mat[ib, ia] = val
    return mat, links


def write_matrix_csv(path, matrix, links, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        labels = [ln.label for ln in links]
        writer.writerow(["link"] + labels)
        for lab, row in zip(labels, matrix):
            writer.writerow([lab] + [repr(float(x)) for x in row])


def read_matrix_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                continue
            rows.append(line)
    reader = list(csv.reader(rows))
    labels = reader[0][1:]
    mat = np.array([[float(x) for x in r[1:]] for r in reader[1:]])
    return mat, [Link.parse(s) for s in labels]

