"""Synthetic measurement campaigns drawn from the correlated model.

Shadowing X is drawn once per experiment and link, jointly across links,
and held fixed across frequencies. Non-shadow fading Y is drawn per
frequency with variance ``n_freq * sigma_y2`` per link, so that after
frequency averaging it has the model variance ``sigma_db2 - Var(X_a)``.
"""

from __future__ import annotations

import numpy as np

from .covariance import DEFAULT_QUADRATURE, QuadratureSpec, ShadowingParams
from .errors import ArgumentError
from .estimation import MeasurementEnsemble
from .field import make_rng
from .geometry import Deployment, PathLossParams, link_distance, mean_power
from .sampler import FactorizedCovariance, build_joint_covariance

DEFAULT_N_FREQ = 14


def synthesize_ensemble(
    dep: Deployment,
    p: PathLossParams,
    sp: ShadowingParams,
    n_experiments: int,
    seed: int,
    n_freq: int = DEFAULT_N_FREQ,
    q: QuadratureSpec = DEFAULT_QUADRATURE,
    fc: FactorizedCovariance | None = None,
) -> MeasurementEnsemble:
    """One record per (experiment, link, frequency), transmitted from the lower index."""
    if n_experiments < 1 or n_freq < 1:
        raise ArgumentError("need n_experiments >= 1 and n_freq >= 1")
    if fc is None or fc.shadow_factor is None:
        fc = build_joint_covariance(dep, sp, q, components=True)
    links = fc.links
    L = len(links)
    rng = make_rng(seed)
    d = np.array([link_distance(dep, ln) for ln in links])
    mu = mean_power(p, d)
    x = rng.standard_normal((n_experiments, L)) @ fc.shadow_factor.T
    y_sd = np.sqrt(n_freq * np.clip(fc.nonshadow_var, 0.0, None))
    y = rng.standard_normal((n_experiments, L, n_freq)) * y_sd[None, :, None]
    rss = mu[None, :, None] - x[:, :, None] - y

    m_idx, l_idx, f_idx = np.meshgrid(np.arange(n_experiments), np.arange(L), np.arange(n_freq), indexing="ij")
    tx = np.array([ln.i for ln in links])[l_idx.ravel()]
    rx = np.array([ln.j for ln in links])[l_idx.ravel()]
    n = rss.size
    return MeasurementEnsemble(
        dep,
        m_idx.ravel() + 1,
        tx,
        rx,
        f_idx.ravel(),
        rss.ravel(),
        np.zeros(n),
        np.full(n, 3000.0),
    )
