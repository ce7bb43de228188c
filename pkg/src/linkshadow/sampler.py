"""Joint sampling of total fading and received power over all links."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .covariance import DEFAULT_QUADRATURE, QuadratureSpec, ShadowingParams, covariance_matrix, link_variance_closed_form
from .errors import ArgumentError, NumericError
from .geometry import Deployment, Link, PathLossParams, enumerate_links, link_distance, mean_power

JITTER_STEPS = (0.0, 1e-10, 1e-8, 1e-6)
BLOCK = 8192


@dataclass(frozen=True, eq=False)
class FactorizedCovariance:
    """Sigma_Z over ``links`` with a lower Cholesky factor.

    ``shadow_factor`` / ``nonshadow_var`` are present when the shadow and
    non-shadow parts were factorized separately.
    """

    links: list
    cov: np.ndarray
    factor: np.ndarray
    jitter: float
    sp: ShadowingParams
    shadow_factor: np.ndarray | None = None
    nonshadow_var: np.ndarray | None = None

    @property
    def n_links(self) -> int:
        return len(self.links)


def _cholesky_with_jitter(mat, scale):
    for step in JITTER_STEPS:
        try:
            jit = step * scale
            return np.linalg.cholesky(mat + jit * np.eye(len(mat))), jit
        except np.linalg.LinAlgError:
            continue
    smallest = float(np.linalg.eigvalsh(mat)[0])
    raise NumericError(
        f"covariance not positive definite after jitter {JITTER_STEPS[-1]:g}*scale; smallest eigenvalue {smallest:.3g}",
        estimate=smallest,
    )


def build_joint_covariance(
    dep: Deployment,
    sp: ShadowingParams,
    q: QuadratureSpec = DEFAULT_QUADRATURE,
    links: list[Link] | None = None,
    components: bool = False,
    workers: int | None = None,
) -> FactorizedCovariance:
    cov, links = covariance_matrix(dep, sp, q, links=links, workers=workers)
    factor, jit = _cholesky_with_jitter(cov, sp.sigma_db2)
    shadow_factor = nonshadow = None
    if components:
        var_x = np.array([link_variance_closed_form(sp, link_distance(dep, ln)) for ln in links]) if sp.sigma_x2 > 0 else np.zeros(len(links))
        shadow = cov.copy()
        np.fill_diagonal(shadow, var_x)
        if sp.sigma_x2 > 0:
            shadow_factor, _ = _cholesky_with_jitter(shadow, sp.sigma_x2)
        else:
            shadow_factor = np.zeros_like(shadow)
        nonshadow = sp.sigma_db2 - var_x
    return FactorizedCovariance(links, cov, factor, jit, sp, shadow_factor, nonshadow)


def iid_covariance(links: list[Link], sigma_db2: float) -> FactorizedCovariance:
    n = len(links)
    sp = ShadowingParams(1.0, 0.0, sigma_db2)
    return FactorizedCovariance(list(links), sigma_db2 * np.eye(n), np.sqrt(sigma_db2) * np.eye(n), 0.0, sp)


@dataclass(frozen=True, eq=False)
class FadingSample:
    links: list
    z: np.ndarray
    x: np.ndarray | None = None

    @property
    def y(self):
        return None if self.x is None else self.z - self.x


@dataclass(frozen=True, eq=False)
class FadingBatch:
    """``z[k, a]`` is the total fading (dB) of sample k on ``links[a]``."""

    links: list
    z: np.ndarray
    seed: int
    x: np.ndarray | None = None

    def __len__(self):
        return self.z.shape[0]

    def __getitem__(self, k) -> FadingSample:
        return FadingSample(self.links, self.z[k], None if self.x is None else self.x[k])

    def __iter__(self):
        return (self[k] for k in range(len(self)))


def standard_normals(n_samples, dim, seed, workers=None):
    """Deterministic N(0,1) draws in fixed blocks, one substream per block.

    The result does not depend on ``workers``.
    """
    n_blocks = -(-n_samples // BLOCK)
    seqs = np.random.SeedSequence(seed).spawn(n_blocks)
    out = np.empty((n_samples, dim))

    def fill(k):
        lo = k * BLOCK
        hi = min(lo + BLOCK, n_samples)
        rng = np.random.Generator(np.random.Philox(seqs[k]))
        out[lo:hi] = rng.standard_normal((hi - lo, dim))

    if workers and workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, range(n_blocks)))
    else:
        for k in range(n_blocks):
            fill(k)
    return out


def sample_fading(fc: FactorizedCovariance, n_samples: int, seed: int, components=False, workers=None) -> FadingBatch:
    if n_samples < 1:
        raise ArgumentError("n_samples must be >= 1")
    if components:
        if fc.shadow_factor is None:
            raise ArgumentError("covariance was built without shadow/non-shadow components")
        g = standard_normals(n_samples, 2 * fc.n_links, seed, workers)
        x = g[:, : fc.n_links] @ fc.shadow_factor.T
        y = g[:, fc.n_links :] * np.sqrt(fc.nonshadow_var)
        return FadingBatch(fc.links, x + y, seed, x)
    g = standard_normals(n_samples, fc.n_links, seed, workers)
    return FadingBatch(fc.links, g @ fc.factor.T, seed)


@dataclass(frozen=True, eq=False)
class RssRealization:
    links: list
    p_dbm: np.ndarray
    n_nodes: int


def sample_rss(dep: Deployment, p: PathLossParams, fading) -> RssRealization:
    """Received power ``mean_power(d) - Z`` per link (vectorised over batches)."""
    d = np.array([link_distance(dep, ln) for ln in fading.links])
    return RssRealization(list(fading.links), mean_power(p, d) - fading.z, dep.n_nodes)


def connectivity_graph(r: RssRealization, gamma_dbm: float) -> np.ndarray:
    """Boolean adjacency (or a stack of them for batched powers)."""
    p = np.asarray(r.p_dbm)
    up = p > gamma_dbm
    shape = up.shape[:-1] + (r.n_nodes, r.n_nodes)
    adj = np.zeros(shape, dtype=bool)
    for a, ln in enumerate(r.links):
        adj[..., ln.i, ln.j] = up[..., a]
        adj[..., ln.j, ln.i] = up[..., a]
    return adj


def write_realizations_csv(path, dep: Deployment, p: PathLossParams, batch: FadingBatch, header: dict):
    rss = sample_rss(dep, p, batch)
    with open(path, "w", newline="") as fh:
        for key, val in header.items():
            fh.write(f"# {key}: {val}\n")
        w = csv.writer(fh)
        w.writerow(["sample_index", "i", "j", "z_db", "p_dbm"])
        for k in range(len(batch)):
            for a, ln in enumerate(batch.links):
                w.writerow([k, ln.i, ln.j, repr(float(batch.z[k, a])), repr(float(rss.p_dbm[k, a]))])


