"""Deployments, links, link-pair geometries and the mean path-loss law."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DataError, DomainError, ParseError

DEFAULT_TOLERANCE_M = 1e-3


@dataclass(frozen=True, order=True)
class Link:
    """Unordered link between two nodes, stored with ``i < j``."""

    i: int
    j: int

    def __post_init__(self):
        i, j = int(self.i), int(self.j)
        if i == j:
            raise ArgumentError(f"self-link ({i},{j}) is not a link")
        if i < 0 or j < 0:
            raise ArgumentError(f"negative node index in link ({i},{j})")
        if i > j:
            i, j = j, i
        object.__setattr__(self, "i", i)
        object.__setattr__(self, "j", j)

    @property
    def label(self) -> str:
        return f"{self.i}-{self.j}"

    def shares_node(self, other: "Link") -> int | None:
        common = {self.i, self.j} & {other.i, other.j}
        return common.pop() if len(common) == 1 else None

    @classmethod
    def parse(cls, text: str) -> "Link":
        i, j = text.split("-")
        return cls(int(i), int(j))


@dataclass(frozen=True, eq=False)
class Deployment:
    """Planar node layout; coordinates in meters."""

    nodes: np.ndarray
    id: str = "deployment"

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise ArgumentError("nodes must be a list of 2-D coordinates")
        if nodes.shape[0] < 2:
            raise ArgumentError("a deployment needs at least 2 nodes")
        if not np.all(np.isfinite(nodes)):
            raise ArgumentError("node coordinates must be finite")
        gaps = np.linalg.norm(nodes[:, None, :] - nodes[None, :, :], axis=-1)
        np.fill_diagonal(gaps, np.inf)
        if np.min(gaps) == 0.0:
            raise ArgumentError("two nodes share identical coordinates")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def check_link(self, link: Link):
        if link.j >= self.n_nodes:
            raise ArgumentError(f"link {link.label} references a node outside 0..{self.n_nodes - 1}")

    def segment(self, link: Link) -> tuple[np.ndarray, np.ndarray]:
        self.check_link(link)
        return self.nodes[link.i], self.nodes[link.j]

    def transformed(self, rotation_rad=0.0, shift=(0.0, 0.0), reflect=False) -> "Deployment":
        c, s = math.cos(rotation_rad), math.sin(rotation_rad)
        pts = self.nodes.copy()
        if reflect:
            pts[:, 1] = -pts[:, 1]
        pts = pts @ np.array([[c, s], [-s, c]]) + np.asarray(shift, dtype=float)
        return Deployment(pts, id=self.id)

    def to_json(self) -> dict:
        return {"id": self.id, "nodes": self.nodes.tolist()}

    @classmethod
    def from_json(cls, obj) -> "Deployment":
        try:
            return cls(obj["nodes"], id=str(obj.get("id", "deployment")))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed deployment object: {exc}") from exc

    @classmethod
    def load(cls, path) -> "Deployment":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON in {path}: {exc.msg}", line=exc.lineno) from exc
        return cls.from_json(obj)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


def grid_deployment(rows=4, cols=4, spacing=1.22, id=None) -> Deployment:
    """Square grid, row-major node order; the measurement campaign used 4x4 at 1.22 m."""
    pts = [(c * spacing, r * spacing) for r in range(rows) for c in range(cols)]
    return Deployment(pts, id=id or f"grid{rows}x{cols}-{spacing:g}m")


def chain_deployment(n_nodes, spacing, id=None) -> Deployment:
    pts = [(k * spacing, 0.0) for k in range(n_nodes)]
    return Deployment(pts, id=id or f"chain{n_nodes}-{spacing:g}m")


@dataclass(frozen=True)
class PathLossParams:
    intercept_dbm: float
    n_p: float
    delta0_m: float = 1.0
    sigma_db: float = 1.0
    gamma_dbm: float = -math.inf

    def __post_init__(self):
        if not self.n_p > 0:
            raise ArgumentError("path-loss exponent n_p must be positive")
        if not self.delta0_m > 0:
            raise ArgumentError("reference distance must be positive")
        if not self.sigma_db > 0:
            raise ArgumentError("sigma_db must be positive")


def link_distance(dep: Deployment, link: Link) -> float:
    a, b = dep.segment(link)
    return float(math.hypot(*(b - a)))


def mean_power(p: PathLossParams, d) -> float | np.ndarray:
    """Ensemble mean received power (dBm) at distance ``d`` meters."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(~(d_arr > 0)):
        raise DomainError("distance must be positive")
    out = p.intercept_dbm - 10.0 * p.n_p * np.log10(d_arr / p.delta0_m)
    return float(out) if out.ndim == 0 else out


def enumerate_links(dep: Deployment) -> list[Link]:
    return [Link(i, j) for i, j in itertools.combinations(range(dep.n_nodes), 2)]


# -- link-pair geometry -----------------------------------------------------


def _frame(points: np.ndarray, tol: float) -> np.ndarray:
    """Place points[0] at the origin, points[1] on +x, points[2] at y >= 0."""
    p = points - points[0]
    ang = math.atan2(p[1, 1], p[1, 0])
    c, s = math.cos(ang), math.sin(ang)
    q = p @ np.array([[c, -s], [s, c]])
    q[1, 1] = 0.0
    if q[2, 1] < -tol or (abs(q[2, 1]) <= tol and q[3, 1] < -tol):
        q[:, 1] = -q[:, 1]
    return q


_ORDERINGS = (
    (0, 1, 2, 3), (1, 0, 2, 3), (0, 1, 3, 2), (1, 0, 3, 2),
    (2, 3, 0, 1), (3, 2, 0, 1), (2, 3, 1, 0), (3, 2, 1, 0),
)


@dataclass(frozen=True, eq=False)
class LinkPairGeometry:
    """Relative placement of two links, compared up to rigid motion and reflection.

    ``coords`` rows are the endpoints (a0, a1, b0, b1).
    """

    coords: np.ndarray
    tolerance: float = DEFAULT_TOLERANCE_M
    _variants: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        c = np.array(self.coords, dtype=float).reshape(4, 2)
        if not np.all(np.isfinite(c)):
            raise ArgumentError("geometry coordinates must be finite")
        la = np.linalg.norm(c[1] - c[0])
        lb = np.linalg.norm(c[3] - c[2])
        if la <= self.tolerance or lb <= self.tolerance:
            raise ArgumentError("both links need positive length")
        same = np.allclose(c[:2], c[2:], atol=self.tolerance) or np.allclose(
            c[:2], c[[3, 2]], atol=self.tolerance
        )
        if same:
            raise ArgumentError("a link pair geometry needs two distinct links")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "_variants", None)

    @classmethod
    def from_links(cls, dep: Deployment, a: Link, b: Link, tolerance=DEFAULT_TOLERANCE_M):
        if a == b:
            raise ArgumentError("a link pair geometry needs two distinct links")
        pa, pb = dep.segment(a), dep.segment(b)
        return cls(np.array([pa[0], pa[1], pb[0], pb[1]]), tolerance)

    def distances(self) -> np.ndarray:
        """Sorted six pairwise endpoint distances."""
        c = self.coords
        return np.sort([np.linalg.norm(c[i] - c[j]) for i, j in itertools.combinations(range(4), 2)])

    def variants(self) -> np.ndarray:
        if self._variants is None:
            out = np.array([_frame(self.coords[list(o)], self.tolerance) for o in _ORDERINGS])
            object.__setattr__(self, "_variants", out)
        return self._variants

    def _key_of(self, q: np.ndarray) -> tuple:
        return tuple(int(v) for v in np.round(q.ravel() / self.tolerance))

    def canonical(self) -> "LinkPairGeometry":
        variants = self.variants()
        best = min(range(len(variants)), key=lambda k: self._key_of(variants[k]))
        return LinkPairGeometry(variants[best], self.tolerance)

    def key(self) -> tuple:
        return self._key_of(self.canonical().coords)

    def congruent(self, other: "LinkPairGeometry") -> bool:
        tol = max(self.tolerance, other.tolerance)
        if np.max(np.abs(self.distances() - other.distances())) > tol:
            return False
        target = other.canonical().coords
        return bool(np.min(np.max(np.abs(self.variants() - target), axis=(1, 2))) <= tol)

    @property
    def lengths(self) -> tuple[float, float]:
        c = self.coords
        return float(np.linalg.norm(c[1] - c[0])), float(np.linalg.norm(c[3] - c[2]))

    def common_node(self) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
        """(common, xi, xj) when the links share exactly one endpoint, else None."""
        c = self.coords
        for ia, ib in itertools.product((0, 1), (2, 3)):
            if np.linalg.norm(c[ia] - c[ib]) <= self.tolerance:
                return c[ia], c[1 - ia], c[5 - ib]
        return None

    def segments(self):
        c = self.coords
        return (c[0], c[1]), (c[2], c[3])


def _pair_distance_table(dep: Deployment, links: list[Link]):
    idx = np.array([[ln.i, ln.j] for ln in links])
    pairs = np.array(list(itertools.combinations(range(len(links)), 2)), dtype=int).reshape(-1, 2)
    pts = np.stack(
        [dep.nodes[idx[pairs[:, 0], 0]], dep.nodes[idx[pairs[:, 0], 1]],
         dep.nodes[idx[pairs[:, 1], 0]], dep.nodes[idx[pairs[:, 1], 1]]],
        axis=1,
    )
    combos = list(itertools.combinations(range(4), 2))
    dists = np.stack([np.linalg.norm(pts[:, i] - pts[:, j], axis=1) for i, j in combos], axis=1)
    return pairs, np.sort(dists, axis=1)


def enumerate_similar_pairs(dep: Deployment, proto: LinkPairGeometry) -> list[tuple[Link, Link]]:
    """All distinct link pairs of ``dep`` congruent to ``proto``.

    Each unordered pair appears once, oriented so its first link plays the
    role of the prototype's first link.
    """
    links = enumerate_links(dep)
    pairs, dists = _pair_distance_table(dep, links)
    tol = proto.tolerance
    cand = np.flatnonzero(np.max(np.abs(dists - proto.distances()), axis=1) <= tol)
    target = proto.canonical()
    len_a = target.lengths[0]
    out = []
    for k in cand:
        la, lb = links[pairs[k, 0]], links[pairs[k, 1]]
        g = LinkPairGeometry.from_links(dep, la, lb, tol)
        if not g.congruent(target):
            continue
        # orient: first link must match the prototype's first link
        if abs(g.lengths[0] - len_a) > tol or not _orientation_matches(g, target):
            la, lb = lb, la
        out.append((la, lb))
    return out


def _orientation_matches(g: LinkPairGeometry, target: LinkPairGeometry) -> bool:
    # orderings 0..3 keep link a first
    v = g.variants()[:4]
    return bool(np.min(np.max(np.abs(v - target.coords), axis=(1, 2))) <= target.tolerance)


def geometry_classes(dep: Deployment, tolerance=DEFAULT_TOLERANCE_M) -> dict[tuple, list[tuple[Link, Link]]]:
    """Group every unordered link pair of ``dep`` by canonical geometry key."""
    links = enumerate_links(dep)
    groups: dict[tuple, list] = {}
    for a, b in itertools.combinations(links, 2):
        g = LinkPairGeometry.from_links(dep, a, b, tolerance)
        groups.setdefault(g.key(), []).append((a, b))
    return groups
