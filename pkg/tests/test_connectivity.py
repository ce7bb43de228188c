import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from linkshadow.connectivity import (
    MarginSpec,
    chain_hop_rho,
    chain_margin,
    chain_rho,
    failure_sweep,
    kappa_from_params,
    mc_chain_failure,
    path_failure_correlated,
    path_failure_iid,
    prob_direct,
    prob_joint_correlated,
    prob_relay,
    qfunc,
    threshold_for_margin,
    write_sweep_csv,
)
from linkshadow.covariance import ShadowingParams
from linkshadow.errors import ArgumentError, DomainError
from linkshadow.geometry import PathLossParams

SP = ShadowingParams.from_ratio(0.21, 0.29, 6.2**2)

# [DERIVED] trivariate normal CDF (scipy Genz) of (direct, hop1, hop2) with the given correlations
TRIVARIATE = [
    ((1.0, 0.6, 0.1, 0.03), 0.11514648357092616),
    ((2.0, 0.971, 0.0762, 0.0248), 0.00884162483116896),
    ((1.5, 0.5, 0.4, 0.2), 0.04844844776878088),
]


def test_kappa_and_direct():
    assert kappa_from_params(2.0, 6.2) == pytest.approx(20 * math.log10(2) / 6.2)
    with pytest.raises(DomainError):
        kappa_from_params(2.0, 0.0)
    assert qfunc(0.0) == pytest.approx(0.5)
    assert prob_direct(1.0, 1.0) == pytest.approx(0.5)
    assert prob_relay(0.0) == pytest.approx(0.25)


def test_iid_failure_closed_form():
    b, k = 1.0, 0.6
    q = qfunc(b)
    assert path_failure_iid(b, k) == pytest.approx(qfunc(b - k) * (1 - (1 - q) ** 2))


@pytest.mark.parametrize("args,expected", TRIVARIATE)
def test_exact_hop_correlation_matches_trivariate_cdf(args, expected):
    assert path_failure_correlated(MarginSpec(*args)) == pytest.approx(expected, abs=1e-8)


def test_simplified_form_matches_conditional_independence():
    b, k, r = 0.0, 0.6, 0.1
    cov = np.array([[1, r, r], [r, 1, r * r], [r, r * r, 1]])
    both_and_direct = stats.multivariate_normal.cdf([b - k, b, b], np.zeros(3), cov, abseps=1e-12, releps=1e-12)
    expected = 1 - stats.norm.cdf(b - k) - stats.norm.cdf(b) ** 2 + both_and_direct
    assert path_failure_correlated(MarginSpec(b, k, r)) == pytest.approx(expected, abs=1e-7)


@given(st.floats(-1, 3), st.floats(0, 2))
def test_zero_correlation_reduces_to_product(b, k):
    m = MarginSpec(b, k, 0.0)
    assert prob_joint_correlated(m) == pytest.approx(prob_direct(b, k) * prob_relay(b), abs=1e-8)
    assert path_failure_correlated(m) == pytest.approx(path_failure_iid(b, k), abs=1e-8)


@given(st.floats(-1, 3), st.floats(0, 0.5), st.floats(0.0, 1.5), st.floats(-0.5, 0.9))
def test_probability_bounds_and_monotone_in_margin(b, step, k, rho):
    p1 = path_failure_correlated(MarginSpec(b, k, rho))
    p2 = path_failure_correlated(MarginSpec(b + step, k, rho))
    assert 0.0 <= p1 <= 1.0
    assert p2 <= p1 + 1e-9


def test_margin_spec_validation():
    with pytest.raises(ArgumentError):
        MarginSpec(1.0, -0.1)
    with pytest.raises(ArgumentError):
        MarginSpec(1.0, 0.5, 1.0)


def test_chain_correlations():
    rho_z = chain_rho(SP, 1.22, "z")
    rho_x = chain_rho(SP, 1.22, "x")
    assert 0 < rho_z < chain_rho(SP, 1.22, "z_approx") < rho_x < 1
    assert chain_rho(ShadowingParams(0.21, 0.0, 1.0), 1.22) == 0.0
    assert 0 < chain_hop_rho(SP, 1.22) < rho_z
    with pytest.raises(ArgumentError):
        chain_rho(SP, 1.22, "bogus")
    m = chain_margin(SP, 1.22, 2.0, 1.0, hop_correlation=True)
    assert m.rho_hops == pytest.approx(chain_hop_rho(SP, 1.22))


def test_mc_never_fails_without_threshold():
    p = PathLossParams(-40.0, 2.0, sigma_db=6.2)
    assert mc_chain_failure(3, 1.22, p, SP, 2000, seed=1).p == 0.0


def test_mc_matches_iid_closed_form():
    sp0 = ShadowingParams(0.21, 0.0, 6.2**2)
    p = PathLossParams(-40.0, 2.0, sigma_db=6.2)
    p = PathLossParams(-40.0, 2.0, 1.0, 6.2, threshold_for_margin(p, 1.22, 1.0))
    res = mc_chain_failure(3, 1.22, p, sp0, 100_000, seed=3)
    expected = path_failure_iid(1.0, kappa_from_params(2.0, 6.2))
    assert abs(res.p - expected) <= 3 * res.stderr


def test_mc_rejects_other_chain_lengths():
    with pytest.raises(ArgumentError):
        mc_chain_failure(5, 1.22, PathLossParams(-40.0, 2.0), SP, 10, 0)


def test_sweep_rows_and_monotone_increase(tmp_path):
    grid = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5]
    rows = failure_sweep(3, grid, 1.22, 2.0, 6.2, SP)
    assert [r.beta_bar for r in rows] == grid
    assert abs(rows[0].pct_increase) < 10
    pct = [r.pct_increase for r in rows]
    assert all(b >= a for a, b in zip(pct, pct[1:]))
    path = tmp_path / "s.csv"
    write_sweep_csv(path, rows, ["seed: 0"])
    text = path.read_text().splitlines()
    assert text[1] == "beta_bar,p_iid,p_corr,pct_increase,mc_stderr,seed"
    assert len(text) == 2 + len(grid)


def test_sweep_flags_unstable_rows():
    rows = failure_sweep(3, [9.0], 1.22, 2.0, 6.2, SP)
    assert rows[0].unstable and math.isnan(rows[0].pct_increase)


def test_sweep_four_nodes_reports_stderr():
    rows = failure_sweep(4, [0.0, 1.0], 1.22, 2.0, 6.2, SP, n_samples=20_000, seed=5)
    assert all(r.mc_stderr > 0 and r.seed == 5 for r in rows)
    with pytest.raises(ArgumentError):
        failure_sweep(3, [], 1.22, 2.0, 6.2, SP)
    with pytest.raises(ArgumentError):
        failure_sweep(3, [1.0], 1.22, 2.0, 5.0, SP)
