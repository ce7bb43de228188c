"""Brute-force oracle: sample the loss field, integrate it along links.

Fields are drawn on a regular grid by circulant embedding of the
exponential covariance (exact for the grid nodes). Each FFT yields two
independent realizations (real and imaginary parts).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy import sparse

from .errors import ArgumentError, NumericError, ResourceError
from .covariance import ShadowingParams

DEFAULT_MEMORY_BUDGET = 2 * 1024**3
MARGIN_DELTAS = 5.0


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator used for every stochastic routine in the package."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True, eq=False)
class FieldRealization:
    """Field samples ``values[ix, iy]`` at ``origin + h * (ix, iy)``."""

    origin: tuple[float, float]
    h: float
    values: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ArgumentError("field values must be finite")

    @property
    def dims(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def extent(self) -> tuple[float, float, float, float]:
        nx, ny = self.dims
        x0, y0 = self.origin
        return x0, x0 + (nx - 1) * self.h, y0, y0 + (ny - 1) * self.h

    def dump(self, path):
        """Write ``path`` (raw float64, C order) and ``path + '.json'``."""
        path = Path(path)
        np.ascontiguousarray(self.values, dtype="<f8").tofile(path)
        meta = {"origin": list(self.origin), "h": self.h, "dims": list(self.dims), "seed": self.seed,
                "dtype": "float64", "order": "C", "index": "values[ix, iy]"}
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "FieldRealization":
        meta = json.loads(Path(str(path) + ".json").read_text())
        vals = np.fromfile(path, dtype="<f8").reshape(meta["dims"])
        return cls(tuple(meta["origin"]), float(meta["h"]), vals, meta.get("seed"))


class FieldSampler:
    """Reusable circulant-embedding sampler for one grid and parameter set."""

    def __init__(self, extent, h, sp: ShadowingParams, memory_budget=DEFAULT_MEMORY_BUDGET):
        xmin, xmax, ymin, ymax = map(float, extent)
        if not (xmax > xmin and ymax > ymin):
            raise ArgumentError("empty field extent")
        if not h > 0 or h > sp.delta_m / 5.0 * (1 + 1e-12):
            raise ArgumentError(f"cell size h={h:g} m exceeds the resolution guard delta/5={sp.delta_m / 5:g} m")
        self.sp = sp
        self.h = float(h)
        self.origin = (xmin, ymin)
        self.nx = int(math.ceil((xmax - xmin) / h - 1e-9)) + 1
        self.ny = int(math.ceil((ymax - ymin) / h - 1e-9)) + 1
        m1 = sfft.next_fast_len(2 * (self.nx - 1))
        m2 = sfft.next_fast_len(2 * (self.ny - 1))
        # eigenvalues, one complex work array and the output pair
        required = m1 * m2 * (8 + 16 * 2) + self.nx * self.ny * 16
        if required > memory_budget:
            raise ResourceError(
                f"field grid {self.nx}x{self.ny} (embedding {m1}x{m2}) needs ~{required / 2**20:.0f} MiB, "
                f"budget is {memory_budget / 2**20:.0f} MiB",
                required_bytes=required,
            )
        self.m1, self.m2 = m1, m2
        i = np.minimum(np.arange(m1), m1 - np.arange(m1))
        j = np.minimum(np.arange(m2), m2 - np.arange(m2))
        r = h * np.hypot(i[:, None], j[None, :])
        base = sp.kernel_prefactor * np.exp(-r / sp.delta_m)
        lam = sfft.fft2(base).real
        neg = lam.min()
        if neg < -1e-8 * lam.max():
            raise NumericError(f"circulant embedding not nonnegative (min eigenvalue {neg:.3g})", estimate=neg)
        self.min_eigenvalue = float(neg)
        self._scale = np.sqrt(np.clip(lam, 0.0, None) / (m1 * m2))

    @property
    def extent(self):
        x0, y0 = self.origin
        return x0, x0 + (self.nx - 1) * self.h, y0, y0 + (self.ny - 1) * self.h

    def pairs(self, rng: np.random.Generator):
        """One FFT, two independent realizations (each ``nx x ny``)."""
        eps = rng.standard_normal((2, self.m1, self.m2))
        z = sfft.fft2(self._scale * (eps[0] + 1j * eps[1]))
        return z.real[: self.nx, : self.ny], z.imag[: self.nx, : self.ny]

    def sample(self, seed) -> FieldRealization:
        a, _ = self.pairs(make_rng(seed))
        return FieldRealization(self.origin, self.h, np.array(a), seed)

    def iter_values(self, n, seed):
        rng = make_rng(seed)
        done = 0
        while done < n:
            a, b = self.pairs(rng)
            yield a
            done += 1
            if done < n:
                yield b
                done += 1


def sample_field(extent, h, sp: ShadowingParams, seed, memory_budget=DEFAULT_MEMORY_BUDGET) -> FieldRealization:
    return FieldSampler(extent, h, sp, memory_budget).sample(seed)


def extent_for(segments, delta, margin_deltas=MARGIN_DELTAS):
    pts = np.array([p for seg in segments for p in seg], dtype=float)
    m = margin_deltas * delta
    return pts[:, 0].min() - m, pts[:, 0].max() + m, pts[:, 1].min() - m, pts[:, 1].max() + m


def line_integral_weights(origin, h, dims, seg) -> sparse.csr_matrix:
    """Row vector ``w`` with ``w @ values.ravel()`` = normalized line integral.

    Midpoint rule with step at most h/2 and bilinear interpolation.
    """
    p0 = np.asarray(seg[0], dtype=float)
    p1 = np.asarray(seg[1], dtype=float)
    d = float(np.hypot(*(p1 - p0)))
    if d <= 0:
        raise ArgumentError("segment has zero length")
    nx, ny = dims
    x0, y0 = origin
    n = max(int(math.ceil(d / (0.5 * h))), 1)
    frac = (np.arange(n) + 0.5) / n
    pts = p0 + frac[:, None] * (p1 - p0)
    gx = (pts[:, 0] - x0) / h
    gy = (pts[:, 1] - y0) / h
    eps = 1e-9
    if gx.min() < -eps or gy.min() < -eps or gx.max() > nx - 1 + eps or gy.max() > ny - 1 + eps:
        raise ArgumentError("segment leaves the field extent")
    ix = np.clip(np.floor(gx).astype(int), 0, nx - 2)
    iy = np.clip(np.floor(gy).astype(int), 0, ny - 2)
    fx = gx - ix
    fy = gy - iy
    ds = d / n
    cols = np.concatenate([ix * ny + iy, (ix + 1) * ny + iy, ix * ny + iy + 1, (ix + 1) * ny + iy + 1])
    vals = np.concatenate([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy]) * ds / math.sqrt(d)
    rows = np.zeros_like(cols)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(1, nx * ny))


def shadowing_by_line_integral(f: FieldRealization, seg) -> float:
    w = line_integral_weights(f.origin, f.h, f.dims, seg)
    return float((w @ f.values.ravel())[0])


def default_cell_size(delta):
    return delta / 8.0


def line_integral_samples(sp: ShadowingParams, segments, n_realizations, seed, h=None, extent=None):
    """Shadowing values for every segment across field realizations.

    Returns an array of shape ``(n_realizations, len(segments))``.
    """
    h = default_cell_size(sp.delta_m) if h is None else h
    extent = extent_for(segments, sp.delta_m) if extent is None else extent
    sampler = FieldSampler(extent, h, sp)
    op = sparse.vstack(
        [line_integral_weights(sampler.origin, sampler.h, (sampler.nx, sampler.ny), s) for s in segments]
    ).tocsr()
    out = np.empty((n_realizations, len(segments)))
    for k, vals in enumerate(sampler.iter_values(n_realizations, seed)):
        out[k] = op @ np.ascontiguousarray(vals).ravel()
    return out


def pearson_with_stderr(x, y):
    r = float(np.corrcoef(x, y)[0, 1])
    n = len(x)
    return r, (1.0 - r * r) / math.sqrt(n - 1)


def empirical_pair_corr(sp: ShadowingParams, seg_a, seg_b, n_realizations, seed, h=None):
    """Sample correlation of the two links' shadowing over field realizations.

    Returns ``(rho, stderr)``.
    """
    if n_realizations < 100:
        raise ArgumentError("need at least 100 realizations")
    same = np.allclose(seg_a, seg_b) or np.allclose(seg_a, seg_b[::-1])
    if same:
        return 1.0, 0.0
    xs = line_integral_samples(sp, [seg_a, seg_b], n_realizations, seed, h)
    return pearson_with_stderr(xs[:, 0], xs[:, 1])
