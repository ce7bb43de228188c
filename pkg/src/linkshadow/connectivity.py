"""Path-failure probabilities on equally spaced relay chains.

Margins are normalised: beta = (P - gamma) / sigma_db, with mean beta_bar on
a single-hop link. The direct link over two hops has mean margin
``beta_bar - kappa``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from .covariance import DEFAULT_QUADRATURE, QuadratureSpec, ShadowingParams, link_cov_numeric, shadowing_corr
from .errors import ArgumentError, DomainError, NumericError
from .geometry import PathLossParams, chain_deployment, enumerate_links, mean_power
from .sampler import build_joint_covariance, iid_covariance, standard_normals

RHO_CLAMP = 1.0 - 1e-12
ABS_TOL = 1e-9
UNSTABLE_BELOW = 1e-12


def qfunc(x):
    return stats.norm.sf(x)


@dataclass(frozen=True)
class MarginSpec:
    """Chain margins.

    ``rho`` correlates each relay hop with the direct link. ``rho_hops`` is
    the correlation between the two relay hops; ``None`` treats them as
    independent and as conditionally independent given the direct link,
    which is the simplified closed form.
    """

    beta_bar: float
    kappa: float
    rho: float = 0.0
    rho_hops: float | None = None

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ArgumentError("kappa must be >= 0")
        if not abs(self.rho) < 1:
            raise ArgumentError("need |rho| < 1")
        if self.rho_hops is not None and not abs(self.rho_hops) < 1:
            raise ArgumentError("need |rho_hops| < 1")

    @property
    def beta_bar_long(self) -> float:
        return self.beta_bar - self.kappa


def kappa_from_params(n_p: float, sigma_db: float) -> float:
    if not sigma_db > 0:
        raise DomainError("sigma_db must be positive")
    return 10.0 * n_p * math.log10(2.0) / sigma_db


def _both_below(h, r):
    """P(U < h, V < h) for standard normals with correlation r (Owen's T form)."""
    return stats.norm.cdf(h) - 2.0 * special.owens_t(h, math.sqrt((1.0 - r) / (1.0 + r)))


def prob_direct(beta_bar: float, kappa: float) -> float:
    """P(direct two-hop-distance link is up)."""
    return float(1.0 - qfunc(beta_bar - kappa))


def prob_relay(beta_bar: float, rho_hops: float | None = None) -> float:
    """P(both single-hop links up); independent hops unless ``rho_hops`` is given."""
    if rho_hops is None:
        return float((1.0 - qfunc(beta_bar)) ** 2)
    return float(_both_below(beta_bar, rho_hops))


def path_failure_iid(beta_bar: float, kappa: float) -> float:
    qb = qfunc(beta_bar)
    return float(qfunc(beta_bar - kappa) * qb * (2.0 - qb))


def prob_joint_correlated(m: MarginSpec, abs_tol: float = ABS_TOL) -> float:
    """P(direct link up and both relay hops up).

    Conditions on the direct link's margin b; each hop is then Gaussian with
    mean ``mu1`` and variance ``1 - rho^2``, and the integrand is the
    probability that both hops are up given b.
    """
    rho = float(np.clip(m.rho, -RHO_CLAMP, RHO_CLAMP))
    s = math.sqrt(1.0 - rho * rho)
    mean_long = m.beta_bar_long
    lo = max(0.0, mean_long - 12.0)
    hi = mean_long + 12.0
    if hi <= 0.0:
        return 0.0
    # conditional correlation of the two hops given b
    rc = None
    if m.rho_hops is not None:
        rc = float(np.clip((m.rho_hops - rho * rho) / (1.0 - rho * rho), -RHO_CLAMP, RHO_CLAMP))

    def f(b):
        h = (m.beta_bar + (b - mean_long) * rho) / s
        both_up = qfunc(-h) ** 2 if rc is None else _both_below(h, rc)
        return both_up * stats.norm.pdf(b - mean_long)

    points = [mean_long]
    if rho != 0.0:
        points.append(mean_long - m.beta_bar / rho)
    points = [p for p in points if lo < p < hi]
    val, err = integrate.quad(f, lo, hi, points=points or None, epsabs=abs_tol, epsrel=1e-10, limit=200)
    if err > 10 * abs_tol:
        raise NumericError(f"margin integral did not converge (error estimate {err:.2g})", estimate=val)
    return float(min(max(val, 0.0), 1.0))


def path_failure_correlated(m: MarginSpec, abs_tol: float = ABS_TOL) -> float:
    pa = prob_direct(m.beta_bar, m.kappa)
    pb = prob_relay(m.beta_bar, m.rho_hops)
    pab = prob_joint_correlated(m, abs_tol)
    return float(min(max(1.0 - (pa + pb - pab), 0.0), 1.0))


def chain_rho(sp: ShadowingParams, spacing: float, convention: str = "z", q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Correlation between a single hop and the two-hop direct link sharing its end node.

    ``"z"``: total-fading correlation Cov(X_ij, X_ik) / sigma_db2, the value
    the joint sampler realises. ``"z_approx"``: ratio * rho_X. ``"x"``: rho_X.
    """
    seg_short = ((0.0, 0.0), (spacing, 0.0))
    seg_long = ((0.0, 0.0), (2.0 * spacing, 0.0))
    if sp.sigma_x2 == 0.0:
        return 0.0
    if convention == "z":
        return link_cov_numeric(sp, seg_short, seg_long, q) / sp.sigma_db2
    rho_x = shadowing_corr(sp, seg_short, seg_long, q)
    if convention == "z_approx":
        return sp.ratio * rho_x
    if convention == "x":
        return rho_x
    raise ArgumentError(f"unknown correlation convention {convention!r}")


def chain_hop_rho(sp: ShadowingParams, spacing: float, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Total-fading correlation of two consecutive hops of the chain."""
    if sp.sigma_x2 == 0.0:
        return 0.0
    seg1 = ((0.0, 0.0), (spacing, 0.0))
    seg2 = ((spacing, 0.0), (2.0 * spacing, 0.0))
    return link_cov_numeric(sp, seg1, seg2, q) / sp.sigma_db2


def chain_margin(sp: ShadowingParams, spacing: float, n_p: float, beta_bar: float, convention: str = "z",
                 hop_correlation: bool = False, q: QuadratureSpec = DEFAULT_QUADRATURE) -> MarginSpec:
    """MarginSpec for a 3-node chain with model-derived correlations."""
    kappa = kappa_from_params(n_p, math.sqrt(sp.sigma_db2))
    rho = chain_rho(sp, spacing, convention, q)
    return MarginSpec(beta_bar, kappa, rho, chain_hop_rho(sp, spacing, q) if hop_correlation else None)


def threshold_for_margin(p: PathLossParams, spacing: float, beta_bar: float) -> float:
    """Receive threshold gamma giving mean margin ``beta_bar`` on a single hop."""
    return float(mean_power(p, spacing) - beta_bar * p.sigma_db)


def _reachable(adj: np.ndarray, src: int, dst: int) -> np.ndarray:
    n = adj.shape[-1]
    reach = np.zeros(adj.shape[:-1], dtype=bool)
    reach[..., src] = True
    for _ in range(n - 1):
        reach = reach | np.any(reach[..., :, None] & adj, axis=-2)
    return reach[..., dst]


@dataclass(frozen=True)
class MCResult:
    p: float
    stderr: float
    n_samples: int
    seed: int


def _mc_failures(fc, mu, gamma, n_nodes, n_samples, seed, workers=None, block=1 << 16):
    links = fc.links
    ii = np.array([ln.i for ln in links])
    jj = np.array([ln.j for ln in links])
    g = standard_normals(n_samples, len(links), seed, workers)
    fails = 0
    for lo in range(0, n_samples, block):
        z = g[lo : lo + block] @ fc.factor.T
        up = (mu[None, :] - z) > gamma
        adj = np.zeros((len(z), n_nodes, n_nodes), dtype=bool)
        adj[:, ii, jj] = up
        adj[:, jj, ii] = up
        fails += int(np.count_nonzero(~_reachable(adj, 0, n_nodes - 1)))
    return fails


def _result(fails, n, seed):
    p = fails / n
    return MCResult(p, math.sqrt(max(p * (1.0 - p), 0.0) / n), n, seed)


def mc_chain_failure(
    n_nodes: int,
    spacing: float,
    p: PathLossParams,
    sp: ShadowingParams,
    n_samples: int,
    seed: int,
    q: QuadratureSpec = DEFAULT_QUADRATURE,
    iid: bool = False,
    workers: int | None = None,
) -> MCResult:
    """Fraction of joint fading draws with no route from the first to the last node.

    All links of the chain (including multi-hop-distance ones) are sampled
    jointly; connectivity is decided by graph reachability with threshold
    ``p.gamma_dbm``. ``iid=True`` drops the shadowing correlation and uses the
    same underlying normals.
    """
    if n_nodes not in (3, 4):
        raise ArgumentError("chains of 3 or 4 nodes are supported")
    if n_samples < 1:
        raise ArgumentError("n_samples must be >= 1")
    dep = chain_deployment(n_nodes, spacing)
    links = enumerate_links(dep)
    fc = iid_covariance(links, sp.sigma_db2) if iid else build_joint_covariance(dep, sp, q, links)
    mu = mean_power(p, np.array([abs(ln.j - ln.i) * spacing for ln in links]))
    fails = _mc_failures(fc, mu, p.gamma_dbm, n_nodes, n_samples, seed, workers)
    return _result(fails, n_samples, seed)


@dataclass(frozen=True)
class SweepRow:
    beta_bar: float
    p_iid: float
    p_corr: float
    pct_increase: float
    mc_stderr: float | None
    seed: int | None
    unstable: bool


def failure_sweep(
    n_nodes: int,
    beta_grid,
    spacing: float,
    n_p: float,
    sigma_db: float,
    sp: ShadowingParams,
    n_samples: int = 100_000,
    seed: int = 0,
    convention: str = "z",
    q: QuadratureSpec = DEFAULT_QUADRATURE,
    workers: int | None = None,
    hop_correlation: bool = False,
) -> list[SweepRow]:
    """Percentage increase of path failure under correlated vs i.i.d. shadowing.

    Three-node chains use the closed forms; four-node chains use Monte Carlo
    with the same normals for both models, so the ratio is less noisy than
    either probability.
    """
    beta_grid = [float(b) for b in beta_grid]
    if not beta_grid:
        raise ArgumentError("beta grid is empty")
    if abs(sp.sigma_db2 - sigma_db**2) > 1e-9 * sigma_db**2:
        raise ArgumentError("sigma_db does not match the shadowing parameters")
    kappa = kappa_from_params(n_p, sigma_db)
    rows = []
    if n_nodes == 3:
        rho = chain_rho(sp, spacing, convention, q)
        rho_hops = chain_hop_rho(sp, spacing, q) if hop_correlation else None
        for b in beta_grid:
            p_iid = path_failure_iid(b, kappa)
            p_corr = path_failure_correlated(MarginSpec(b, kappa, rho, rho_hops))
            rows.append(_row(b, p_iid, p_corr, None, None))
        return rows
    if n_nodes != 4:
        raise ArgumentError("chains of 3 or 4 nodes are supported")
    dep = chain_deployment(4, spacing)
    links = enumerate_links(dep)
    fc_corr = build_joint_covariance(dep, sp, q, links)
    fc_iid = iid_covariance(links, sp.sigma_db2)
    hops = np.array([abs(ln.j - ln.i) for ln in links], dtype=float)
    for b in beta_grid:
        # margins in units of sigma_db relative to gamma = 0
        mu = sigma_db * (b - 10.0 * n_p * np.log10(hops) / sigma_db)
        f_iid = _mc_failures(fc_iid, mu, 0.0, 4, n_samples, seed, workers)
        f_corr = _mc_failures(fc_corr, mu, 0.0, 4, n_samples, seed, workers)
        p_iid = f_iid / n_samples
        res = _result(f_corr, n_samples, seed)
        rows.append(_row(b, p_iid, res.p, res.stderr, seed))
    return rows


def _row(b, p_iid, p_corr, stderr, seed):
    unstable = p_iid < UNSTABLE_BELOW
    pct = float("nan") if unstable else 100.0 * (p_corr / p_iid - 1.0)
    return SweepRow(b, p_iid, p_corr, pct, stderr, seed, unstable)


def write_sweep_csv(path, rows: list[SweepRow], header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["beta_bar", "p_iid", "p_corr", "pct_increase", "mc_stderr", "seed"])
        for r in rows:
            w.writerow([
                repr(r.beta_bar), repr(r.p_iid), repr(r.p_corr),
                "unstable" if r.unstable else repr(r.pct_increase),
                "" if r.mc_stderr is None else repr(r.mc_stderr),
                "" if r.seed is None else r.seed,
            ])
