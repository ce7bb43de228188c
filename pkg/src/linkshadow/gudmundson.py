"""Exponential distance-decay baseline for links that share a node.

The baseline sees only the separation of the two far endpoints, so it cannot
tell where the shared node sits relative to them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import ArgumentError, DataError, RankError
from .estimation import pearson


@dataclass(frozen=True)
class GudmundsonParams:
    epsilon_d: float
    d_ref: float
    sigma_x2: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.epsilon_d < 1.0:
            raise ArgumentError("epsilon_d must lie in (0, 1)")
        if not self.d_ref > 0:
            raise ArgumentError("reference distance must be positive")


def gudmundson_corr(g: GudmundsonParams, xi, xj) -> float:
    """Normalised correlation eps_D ** (|xi - xj| / D)."""
    d = float(np.linalg.norm(np.asarray(xi, dtype=float) - np.asarray(xj, dtype=float)))
    return g.epsilon_d ** (d / g.d_ref)


@dataclass(frozen=True)
class GudmundsonFit:
    """Log-linear fit ``log rho = intercept + (d / D) log eps``.

    ``params.sigma_x2`` holds ``exp(intercept)``, the scale of the fitted
    curve; with normalised inputs it is not a variance in dB^2.
    """

    params: GudmundsonParams
    intercept: float
    used: tuple
    excluded: tuple
    method: str = "log"

    def predict(self, distance) -> np.ndarray:
        d = np.asarray(distance, dtype=float)
        return self.params.sigma_x2 * self.params.epsilon_d ** (d / self.params.d_ref)


# decay-rate bounds for the linear-domain fallback, keeping eps_d inside (0, 1)
_MIN_DECAY = 1e-6
_MAX_DECAY = 50.0


def _fit_linear_domain(rho, x):
    """Least squares of ``rho ~ s * exp(-t x)`` over all points, t bounded."""
    def resid(theta):
        return theta[0] * np.exp(-theta[1] * x) - rho

    s0 = max(float(np.mean(rho)), 1e-3)
    sol = optimize.least_squares(resid, [s0, 0.5], bounds=([-np.inf, _MIN_DECAY], [np.inf, _MAX_DECAY]))
    return float(sol.x[0]), float(sol.x[1])


def fit_gudmundson(measured, distances, d_ref: float) -> GudmundsonFit:
    """Regress log of the positive measured correlations on separation.

    Non-positive values are left out and their indices reported. When the
    positive values show no decay (a log slope that is not negative, typical when noise
    dominates at large separations and only the upward fluctuations survive
    the filter), the curve is instead fitted by bounded least squares on all
    points in the linear domain; ``method`` records which fit was used.
    """
    rho = np.asarray(measured, dtype=float)
    d = np.asarray(distances, dtype=float)
    if rho.shape != d.shape:
        raise ArgumentError("measured and distances must align")
    if not d_ref > 0:
        raise ArgumentError("reference distance must be positive")
    keep = np.flatnonzero(rho > 0)
    drop = np.flatnonzero(~(rho > 0))
    if len(keep) < 2:
        raise DataError("need at least 2 positive correlations for the log regression")
    x = d[keep] / d_ref
    if np.ptp(x) == 0:
        raise RankError("all separations are equal")
    slope, intercept = np.polyfit(x, np.log(rho[keep]), 1)
    eps = math.exp(slope)
    if 0.0 < eps < 1.0:
        params = GudmundsonParams(eps, d_ref, math.exp(intercept))
        return GudmundsonFit(params, float(intercept), tuple(int(k) for k in keep), tuple(int(k) for k in drop))
    scale, decay = _fit_linear_domain(rho, d / d_ref)
    if not scale > 0:
        raise DataError("measured correlations are not positive on average; baseline undefined")
    params = GudmundsonParams(math.exp(-decay), d_ref, scale)
    return GudmundsonFit(params, math.log(scale), tuple(range(len(rho))), (), method="linear")


@dataclass(frozen=True)
class ModelComparison:
    proposed: float
    gudmundson: float
    n_proposed: int
    n_gudmundson: int

    def write_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["model", "correlation_with_measured", "n_geometries"])
            w.writerow(["proposed", f"{self.proposed:.6f}", self.n_proposed])
            w.writerow(["gudmundson", f"{self.gudmundson:.6f}", self.n_gudmundson])


def compare_models(measured, proposed, gudmundson) -> ModelComparison:
    """Pearson agreement of each model with the measurements.

    ``gudmundson`` entries that are None or NaN (no shared node) are skipped.
    """
    y = np.asarray(measured, dtype=float)
    p = np.asarray(proposed, dtype=float)
    g = np.array([np.nan if v is None else v for v in gudmundson], dtype=float)
    if not (len(y) == len(p) == len(g)):
        raise ArgumentError("vectors must align")
    ok = ~np.isnan(g)
    if len(y) < 3 or ok.sum() < 3:
        raise ArgumentError("need at least 3 geometries per model")
    return ModelComparison(pearson(y, p), pearson(y[ok], g[ok]), len(y), int(ok.sum()))
