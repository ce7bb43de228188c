"""Parameter estimation from measured RSS ensembles.

Covers frequency averaging, the per-experiment path-loss regression, link-pair
correlation with its significance test, and the space-constant sweep that
matches model correlations to measured ones.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .covariance import (
    DEFAULT_QUADRATURE,
    QuadratureSpec,
    ShadowingParams,
    covariance_matrix,
    link_cov_numeric,
    shadowing_corr,
)
from .errors import ArgumentError, DataError, ParseError, RankError, UndefinedCorrelationError
from .geometry import Deployment, Link, LinkPairGeometry, PathLossParams, enumerate_similar_pairs, link_distance

log = logging.getLogger(__name__)

CSV_COLUMNS = ("experiment_id", "tx", "rx", "freq_index", "rss_dbm", "tx_power", "battery_mv")
MIN_FREQUENCIES = 3
DEFAULT_DELTA_GRID = tuple(round(0.10 + 0.01 * k, 2) for k in range(31))


@dataclass(frozen=True, eq=False)
class MeasurementEnsemble:
    """Raw per-frequency RSS records over M deployments of the same layout."""

    deployment: Deployment
    experiment: np.ndarray
    tx: np.ndarray
    rx: np.ndarray
    freq_index: np.ndarray
    rss_dbm: np.ndarray
    tx_power: np.ndarray | None = None
    battery_mv: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.rss_dbm)
        if n == 0:
            raise DataError("measurement ensemble is empty")
        for name in ("experiment", "tx", "rx", "freq_index"):
            if len(getattr(self, name)) != n:
                raise DataError(f"column {name} length mismatch")
        if not np.all(np.isfinite(self.rss_dbm)):
            raise DataError("rss values must be finite")
        if np.any(self.tx == self.rx):
            raise DataError("record with tx == rx")
        top = max(int(np.max(self.tx)), int(np.max(self.rx)))
        if top >= self.deployment.n_nodes or min(int(np.min(self.tx)), int(np.min(self.rx))) < 0:
            raise DataError("record references a node outside the deployment")

    @property
    def experiments(self) -> list[int]:
        return sorted(int(m) for m in np.unique(self.experiment))

    @property
    def frequencies(self) -> list[int]:
        return sorted(int(f) for f in np.unique(self.freq_index))

    def write_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            tp = self.tx_power if self.tx_power is not None else np.zeros(len(self.rss_dbm))
            bv = self.battery_mv if self.battery_mv is not None else np.zeros(len(self.rss_dbm))
            for row in zip(self.experiment, self.tx, self.rx, self.freq_index, self.rss_dbm, tp, bv):
                w.writerow([int(row[0]), int(row[1]), int(row[2]), int(row[3]), repr(float(row[4])),
                            repr(float(row[5])), repr(float(row[6]))])


def read_measurements_csv(path_or_text, deployment: Deployment) -> MeasurementEnsemble:
    """Parse the measurement log. Lines starting with '#' are comments."""
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        fh = io.StringIO(path_or_text)
    else:
        fh = open(path_or_text, newline="")
    with fh:
        header = None
        cols = {k: [] for k in CSV_COLUMNS}
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            row = next(csv.reader([line]))
            if header is None:
                header = [h.strip() for h in row]
                missing = [c for c in CSV_COLUMNS[:5] if c not in header]
                if missing:
                    raise ParseError(f"missing columns {missing}", line=lineno)
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
            rec = dict(zip(header, row))
            try:
                cols["experiment_id"].append(int(rec["experiment_id"]))
                cols["tx"].append(int(rec["tx"]))
                cols["rx"].append(int(rec["rx"]))
                cols["freq_index"].append(int(rec["freq_index"]))
                cols["rss_dbm"].append(float(rec["rss_dbm"]))
                cols["tx_power"].append(float(rec.get("tx_power") or "nan"))
                cols["battery_mv"].append(float(rec.get("battery_mv") or "nan"))
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from exc
            if not math.isfinite(cols["rss_dbm"][-1]):
                raise ParseError("rss_dbm must be finite", line=lineno)
    if header is None or not cols["rss_dbm"]:
        raise ParseError("no measurement records found", line=None)
    return MeasurementEnsemble(
        deployment,
        np.array(cols["experiment_id"]),
        np.array(cols["tx"]),
        np.array(cols["rx"]),
        np.array(cols["freq_index"]),
        np.array(cols["rss_dbm"]),
        np.array(cols["tx_power"]),
        np.array(cols["battery_mv"]),
    )


@dataclass(frozen=True, eq=False)
class AveragedPower:
    """Frequency-averaged power ``power[m, a]`` (NaN where excluded)."""

    experiments: list
    links: list
    power: np.ndarray
    n_freq: np.ndarray
    excluded: list = field(default_factory=list)


def freq_average(e: MeasurementEnsemble, min_frequencies: int = MIN_FREQUENCIES) -> AveragedPower:
    """Arithmetic mean (in dB) over frequencies per experiment and link.

    Both transmit directions of a link are pooled. Links measured on fewer
    than ``min_frequencies`` distinct frequencies are excluded and listed.
    """
    exps = e.experiments
    i = np.minimum(e.tx, e.rx)
    j = np.maximum(e.tx, e.rx)
    link_ids = sorted(set(zip(i.tolist(), j.tolist())))
    links = [Link(a, b) for a, b in link_ids]
    lidx = {lk: k for k, lk in enumerate(link_ids)}
    midx = {m: k for k, m in enumerate(exps)}
    rows = np.array([midx[int(m)] for m in e.experiment])
    cols = np.array([lidx[(a, b)] for a, b in zip(i.tolist(), j.tolist())])
    shape = (len(exps), len(links))
    sums = np.zeros(shape)
    counts = np.zeros(shape)
    np.add.at(sums, (rows, cols), e.rss_dbm)
    np.add.at(counts, (rows, cols), 1.0)
    nfreq = np.zeros(shape, dtype=int)
    seen = set(zip(rows.tolist(), cols.tolist(), e.freq_index.tolist()))
    for r, c, _ in seen:
        nfreq[r, c] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        power = sums / counts
    excluded = []
    bad = nfreq < min_frequencies
    if np.any(bad):
        for r, c in zip(*np.nonzero(bad)):
            excluded.append((exps[r], links[c]))
        power[bad] = np.nan
        log.warning("excluded %d (experiment, link) cells with fewer than %d frequencies", len(excluded), min_frequencies)
    return AveragedPower(exps, links, power, nfreq, excluded)


@dataclass(frozen=True, eq=False)
class PathLossFit:
    """Path-loss regression result.

    ``residuals[m, a]`` is the fading Z (dB) with P = mean - Z.
    """

    params: PathLossParams
    intercepts: np.ndarray
    exponents: np.ndarray
    sigma_db2: float
    residuals: np.ndarray
    links: list
    experiments: list
    distances: np.ndarray
    per_experiment: bool


def _regress(x, y):
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef, y - design @ coef


def fit_path_loss(avg: AveragedPower, dep: Deployment, per_experiment: bool = True, delta0_m: float = 1.0) -> PathLossFit:
    """Least squares of averaged power on ``-10 log10(d / delta0)``.

    The slope is n_p and the intercept is (P_T - Pi_0). sigma_db2 is the
    pooled unbiased residual variance.
    """
    d = np.array([link_distance(dep, ln) for ln in avg.links])
    x = -10.0 * np.log10(d / delta0_m)
    valid = ~np.isnan(avg.power)
    if len(np.unique(np.round(d[np.any(valid, axis=0)], 9))) < 3:
        raise RankError("path-loss regression needs at least 3 distinct link distances")
    resid = np.full(avg.power.shape, np.nan)
    M = len(avg.experiments)
    if per_experiment:
        intercepts = np.empty(M)
        exponents = np.empty(M)
        for m in range(M):
            ok = valid[m]
            if len(np.unique(np.round(d[ok], 9))) < 2:
                raise RankError(f"experiment {avg.experiments[m]} has a single distinct distance")
            (c0, c1), r = _regress(x[ok], avg.power[m, ok])
            intercepts[m], exponents[m] = c0, c1
            resid[m, ok] = -r
        n_params = 2 * M
    else:
        xs = np.broadcast_to(x, avg.power.shape)[valid]
        (c0, c1), r = _regress(xs, avg.power[valid])
        intercepts = np.full(M, c0)
        exponents = np.full(M, c1)
        resid[valid] = -r
        n_params = 2
    n_obs = int(valid.sum())
    dof = n_obs - n_params
    if dof <= 0:
        raise RankError("not enough observations for the residual variance")
    sigma_db2 = float(np.nansum(resid**2) / dof)
    n_p = float(np.mean(exponents))
    if not n_p > 0:
        raise DataError(f"fitted path-loss exponent {n_p:.3g} is not positive")
    params = PathLossParams(float(np.mean(intercepts)), n_p, delta0_m, math.sqrt(sigma_db2) if sigma_db2 > 0 else 1e-300)
    return PathLossFit(params, intercepts, exponents, sigma_db2, resid, list(avg.links), list(avg.experiments), d, per_experiment)


def stack_pair_vectors(residuals, links, pairs):
    """Stack per-experiment residual vectors for the pairs (rows = experiments).

    Each experiment's residuals are centred first, so a constant offset on
    one experiment (e.g. a transmit-power shift) does not create correlation.
    """
    res = np.asarray(residuals, dtype=float)
    if res.ndim == 1:
        res = res[None, :]
    index = {ln: k for k, ln in enumerate(links)}
    try:
        ia = np.array([index[a] for a, _ in pairs], dtype=int)
        ib = np.array([index[b] for _, b in pairs], dtype=int)
    except KeyError as exc:
        raise ArgumentError(f"link {exc} has no residuals") from exc
    centred = res - np.nanmean(res, axis=1, keepdims=True)
    za = centred[:, ia].ravel()
    zb = centred[:, ib].ravel()
    ok = ~(np.isnan(za) | np.isnan(zb))
    return za[ok], zb[ok]


def pearson(za, zb) -> float:
    za = np.asarray(za, dtype=float)
    zb = np.asarray(zb, dtype=float)
    da = za - za.mean()
    db = zb - zb.mean()
    sa = math.sqrt(float(da @ da))
    sb = math.sqrt(float(db @ db))
    if sa == 0.0 or sb == 0.0:
        raise UndefinedCorrelationError("correlation undefined: a vector has zero variance")
    return float(np.clip((da @ db) / (sa * sb), -1.0, 1.0))


def pair_correlation(residuals, links, pairs) -> tuple[float, int]:
    """Sample rho_Z of the stacked LM-long vectors. Returns ``(rho, n)``."""
    za, zb = stack_pair_vectors(residuals, links, pairs)
    if len(za) < 3:
        raise ArgumentError("need at least 3 stacked samples (L*M >= 3)")
    return pearson(za, zb), len(za)


def corr_p_value(rho: float, n: int) -> float:
    """Two-sided p-value of H0: rho = 0 via the Student-t statistic."""
    if n < 3:
        raise ArgumentError("need n >= 3")
    if abs(rho) >= 1.0:
        return 0.0
    t = rho * math.sqrt(n - 2) / math.sqrt(1.0 - rho * rho)
    return float(min(1.0, 2.0 * stats.t.sf(abs(t), n - 2)))


def significance_stars(p: float) -> str:
    if p < 0.005:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


# -- model fitting ----------------------------------------------------------

_MODEL_CACHE: dict = {}


def model_corr(g: LinkPairGeometry, delta: float, q: QuadratureSpec = DEFAULT_QUADRATURE, regressor: str = "cov"):
    """Model-side regressor for one geometry at space constant ``delta``.

    ``"rho_x"`` is the shadowing correlation coefficient. ``"cov"`` is
    Cov(X_a, X_b)/sigma_x2, which is what rho_Z is proportional to once the
    finite-length link variances are kept, so its regression slope estimates
    sigma_x2/sigma_db2 without bias.
    """
    key = (g.key(), g.tolerance, round(delta, 12), q, regressor)
    hit = _MODEL_CACHE.get(key)
    if hit is not None:
        return hit
    sp = ShadowingParams(delta, 1.0, 1.0)
    sa, sb = g.segments()
    if regressor == "rho_x":
        val = shadowing_corr(sp, sa, sb, q)
    elif regressor == "cov":
        val = link_cov_numeric(sp, sa, sb, q)
    else:
        raise ArgumentError(f"unknown regressor {regressor!r}")
    _MODEL_CACHE[key] = val
    return val


@dataclass(frozen=True)
class DeltaFit:
    delta_star: float
    ratio: float
    intercept: float
    ratio_through_origin: float
    rho_c_star: float
    delta_grid: tuple
    rho_c: tuple
    slopes: tuple
    regressor: str

    def to_json(self):
        return {
            "delta_star_m": self.delta_star,
            "sigma_x2_over_sigma_db2": self.ratio,
            "regression_intercept": self.intercept,
            "ratio_through_origin": self.ratio_through_origin,
            "rho_c_max": self.rho_c_star,
            "regressor": self.regressor,
            "delta_grid_m": list(self.delta_grid),
            "rho_c_curve": list(self.rho_c),
            "slope_curve": list(self.slopes),
        }


_UNIT_COV_CACHE: dict = {}


def _unit_offdiag_cov(dep: Deployment, links: tuple, delta: float, q: QuadratureSpec) -> np.ndarray:
    """Link covariance at sigma_x2 = 1 with a zero diagonal, shared across fits."""
    key = (dep.nodes.tobytes(), links, delta, q)
    if key not in _UNIT_COV_CACHE:
        cmat, _ = covariance_matrix(dep, ShadowingParams(delta, 1.0, 1.0), q, links=list(links))
        np.fill_diagonal(cmat, 0.0)
        cmat.setflags(write=False)
        _UNIT_COV_CACHE[key] = cmat
    return _UNIT_COV_CACHE[key]


class ResidualModel:
    """Model prediction of the correlation the estimation pipeline measures.

    Measured correlations are computed from regression residuals, which are
    a linear projection ``T z`` of the fading vector; the projection removes
    part of the shadowing the links share. For each geometry this predicts
    the stacked-vector correlation from ``T Sigma T'``, split as
    ``offset + ratio * regressor`` (to first order in the ratio), so a
    regression on ``regressor`` estimates the ratio without that bias.
    """

    def __init__(self, dep: Deployment, links, projector, pair_lists, q: QuadratureSpec = DEFAULT_QUADRATURE):
        self.dep = dep
        self.links = list(links)
        self.projector = np.asarray(projector, dtype=float)
        self.q = q
        index = {ln: k for k, ln in enumerate(self.links)}
        self.pair_index = [
            (np.array([index[a] for a, _ in pairs], dtype=int), np.array([index[b] for _, b in pairs], dtype=int))
            for pairs in pair_lists
        ]
        base = self.projector @ self.projector.T
        self._base = base
        self._scale = np.array([math.sqrt(base[a, a].mean() * base[b, b].mean()) for a, b in self.pair_index])
        self.offset = np.array([base[a, b].mean() for a, b in self.pair_index]) / self._scale
        self._cache: dict = {}

    @classmethod
    def from_fit(cls, fit: PathLossFit, dep: Deployment, pair_lists, centred: bool = True,
                 q: QuadratureSpec = DEFAULT_QUADRATURE) -> "ResidualModel":
        n = len(fit.links)
        if fit.per_experiment:
            x = -10.0 * np.log10(fit.distances / fit.params.delta0_m)
            design = np.column_stack([np.ones(n), x])
            proj = np.eye(n) - design @ np.linalg.pinv(design)
        else:
            proj = np.eye(n)
        if centred:
            proj = (np.eye(n) - np.full((n, n), 1.0 / n)) @ proj
        return cls(dep, fit.links, proj, pair_lists, q)

    def regressor(self, delta: float) -> np.ndarray:
        key = round(delta, 12)
        if key not in self._cache:
            cmat = _unit_offdiag_cov(self.dep, tuple(self.links), key, self.q)
            k = self.projector @ cmat @ self.projector.T
            self._cache[key] = np.array([k[a, b].mean() for a, b in self.pair_index]) / self._scale
        return self._cache[key]


def fit_delta(measured, geometries, q: QuadratureSpec = DEFAULT_QUADRATURE, delta_grid=DEFAULT_DELTA_GRID,
              regressor: str = "cov", residual_model: ResidualModel | None = None) -> DeltaFit:
    """Sweep delta, regress measured rho_Z on the model, keep the best rho_C.

    ``measured[k]`` is the measured correlation for ``geometries[k]``. With a
    ``residual_model`` (whose pair lists align with ``geometries``) the
    regressor is its prediction and the known offset is removed from the
    measured values first.
    """
    y = np.asarray(measured, dtype=float)
    if len(y) != len(geometries):
        raise ArgumentError("measured and geometries must align")
    if len(y) < 3:
        raise ArgumentError("need at least 3 geometries with a measured correlation")
    if len(delta_grid) < 1:
        raise ArgumentError("empty delta grid")
    if residual_model is not None:
        if len(residual_model.pair_index) != len(y):
            raise ArgumentError("residual model pair lists must align with geometries")
        y = y - residual_model.offset
        regressor = "residual"
    rho_c, slopes, icpts, origin = [], [], [], []
    for delta in delta_grid:
        if residual_model is not None:
            x = residual_model.regressor(delta)
        else:
            x = np.array([model_corr(g, delta, q, regressor) for g in geometries])
        dx = x - x.mean()
        sxx = float(dx @ dx)
        if sxx <= 1e-15 * max(1.0, float(x @ x)):
            raise RankError(f"model correlations are constant at delta={delta:g}")
        slope = float(dx @ (y - y.mean())) / sxx
        slopes.append(slope)
        icpts.append(float(y.mean() - slope * x.mean()))
        origin.append(float(x @ y) / float(x @ x))
        rho_c.append(pearson(x, y) if np.ptp(y) > 0 else 0.0)
    best = int(np.argmax(rho_c))
    return DeltaFit(
        float(delta_grid[best]), slopes[best], icpts[best], origin[best], rho_c[best],
        tuple(float(d) for d in delta_grid), tuple(rho_c), tuple(slopes), regressor,
    )


@dataclass(frozen=True, eq=False)
class CorrelationRow:
    geometry_id: str
    n_pairs: int
    n_samples: int
    measured: float
    p_value: float
    pairs: list = field(default_factory=list, repr=False)

    @property
    def stars(self) -> str:
        return significance_stars(self.p_value)


def measure_geometries(fit: PathLossFit, dep: Deployment, catalog_entries, min_samples: int = 3) -> list[CorrelationRow]:
    """Measured rho_Z and p-value for every catalog geometry present in ``dep``.

    Geometries with no congruent pair, too few samples or an undefined
    correlation are skipped.
    """
    rows = []
    for entry in catalog_entries:
        pairs = enumerate_similar_pairs(dep, entry.geometry)
        if not pairs:
            continue
        try:
            rho, n = pair_correlation(fit.residuals, fit.links, pairs)
        except (ArgumentError, UndefinedCorrelationError):
            continue
        if n < min_samples:
            continue
        rows.append(CorrelationRow(entry.id, len(pairs), n, rho, corr_p_value(rho, n), pairs))
    return rows
