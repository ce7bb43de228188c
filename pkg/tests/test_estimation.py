import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from linkshadow.errors import ArgumentError, ParseError, RankError, UndefinedCorrelationError
from linkshadow.estimation import (
    MeasurementEnsemble,
    ResidualModel,
    corr_p_value,
    fit_delta,
    fit_path_loss,
    freq_average,
    measure_geometries,
    model_corr,
    pair_correlation,
    pearson,
    read_measurements_csv,
    significance_stars,
)
from linkshadow.geometry import Link, PathLossParams, chain_deployment, enumerate_links, mean_power
from linkshadow.synthetic import synthesize_ensemble


def _ensemble(dep, rows):
    e, tx, rx, f, r = (np.array(c) for c in zip(*rows))
    return MeasurementEnsemble(dep, e, tx, rx, f, r.astype(float))


def test_freq_average_identical_values():
    dep = chain_deployment(2, 1.0)
    avg = freq_average(_ensemble(dep, [(1, 0, 1, k, -55.0) for k in range(14)]))
    assert avg.power[0, 0] == pytest.approx(-55.0)
    assert avg.n_freq[0, 0] == 14


def test_freq_average_is_mean_in_db():
    dep = chain_deployment(2, 1.0)
    rows = [(1, 0, 1, 0, -60.0), (1, 1, 0, 1, -62.0), (1, 0, 1, 2, -61.0)]
    assert freq_average(_ensemble(dep, rows)).power[0, 0] == pytest.approx(-61.0)


def test_freq_average_excludes_sparse_cells():
    dep = chain_deployment(3, 1.0)
    rows = [(1, 0, 1, k, -50.0) for k in range(5)] + [(1, 1, 2, 0, -50.0)]
    avg = freq_average(_ensemble(dep, rows))
    assert avg.excluded == [(1, Link(1, 2))]
    assert math.isnan(avg.power[0, 1])


CSV = """# campaign A
experiment_id,tx,rx,freq_index,rss_dbm,tx_power,battery_mv
1,0,1,0,-50.5,0,3000
1,1,2,0,-52.0,0,2990
"""


def test_read_csv_with_comments():
    ens = read_measurements_csv(CSV, chain_deployment(3, 1.0))
    assert ens.experiments == [1]
    np.testing.assert_allclose(ens.rss_dbm, [-50.5, -52.0])


def test_read_csv_errors_carry_line_numbers():
    dep = chain_deployment(3, 1.0)
    with pytest.raises(ParseError) as exc:
        read_measurements_csv(CSV.replace("-52.0", "abc"), dep)
    assert exc.value.line == 4
    with pytest.raises(ParseError):
        read_measurements_csv("experiment_id,tx\n1,0\n", dep)
    with pytest.raises(ParseError):
        read_measurements_csv(CSV.splitlines()[1] + "\n", dep)


def test_csv_roundtrip(tmp_path, grid, sp, path_loss, grid_fc):
    ens = synthesize_ensemble(grid, path_loss, sp, 2, seed=3, n_freq=3, fc=grid_fc)
    path = tmp_path / "m.csv"
    ens.write_csv(path, ["seed: 3"])
    back = read_measurements_csv(path, grid)
    np.testing.assert_array_equal(back.rss_dbm, ens.rss_dbm)
    np.testing.assert_array_equal(back.tx, ens.tx)


def test_path_loss_exact_recovery(grid):
    p = PathLossParams(-38.0, 2.7)
    links = enumerate_links(grid)
    rows = []
    for m in (1, 2):
        for ln in links:
            d = float(np.linalg.norm(grid.nodes[ln.i] - grid.nodes[ln.j]))
            rows += [(m, ln.i, ln.j, f, mean_power(p, d)) for f in range(3)]
    rows[0] = rows[0][:4] + (rows[0][4] + 0.3,)
    rows[1] = rows[1][:4] + (rows[1][4] - 0.3,)
    for per in (True, False):
        fit = fit_path_loss(freq_average(_ensemble(grid, rows)), grid, per_experiment=per)
        assert fit.params.n_p == pytest.approx(2.7, abs=1e-9)
        assert fit.params.intercept_dbm == pytest.approx(-38.0, abs=1e-9)


def test_path_loss_needs_three_distances():
    dep = chain_deployment(3, 1.0)
    rows = [(1, i, j, f, -50.0 - i) for i, j in ((0, 1), (1, 2), (0, 2)) for f in range(3)]
    with pytest.raises(RankError):
        fit_path_loss(freq_average(_ensemble(dep, rows)), dep)


def test_residuals_orthogonal_to_design(grid, sp, path_loss, grid_fc):
    ens = synthesize_ensemble(grid, path_loss, sp, 3, seed=1, n_freq=3, fc=grid_fc)
    fit = fit_path_loss(freq_average(ens), grid)
    x = -10 * np.log10(fit.distances)
    for m in range(3):
        assert abs(fit.residuals[m].sum()) < 1e-8
        assert abs(fit.residuals[m] @ x) < 1e-7


def test_synthetic_variance(sp, path_loss):
    dep = chain_deployment(4, 1.22)
    ens = synthesize_ensemble(dep, path_loss, sp, 3000, seed=5)
    avg = freq_average(ens)
    links = avg.links
    d = np.array([np.linalg.norm(dep.nodes[ln.i] - dep.nodes[ln.j]) for ln in links])
    z = mean_power(path_loss, d)[None, :] - avg.power
    np.testing.assert_allclose(z.var(axis=0), sp.sigma_db2, rtol=0.08)


def test_pearson_matches_reference():
    rng = np.random.default_rng(0)
    a = rng.standard_normal(50)
    b = 0.4 * a + rng.standard_normal(50)
    r_ref, p_ref = stats.pearsonr(a, b)
    assert pearson(a, b) == pytest.approx(r_ref, rel=1e-12)
    assert corr_p_value(pearson(a, b), 50) == pytest.approx(p_ref, rel=1e-9)
    with pytest.raises(UndefinedCorrelationError):
        pearson(np.ones(5), a[:5])


@given(st.floats(-0.99, 0.99), st.floats(0.0, 0.5), st.integers(3, 5000))
def test_p_value_monotone(rho, step, n):
    p = corr_p_value(rho, n)
    assert 0.0 <= p <= 1.0
    stronger = math.copysign(min(abs(rho) + step, 0.999), rho if rho != 0 else 1.0)
    assert corr_p_value(stronger, n) <= p + 1e-15
    assert corr_p_value(rho, n + 10) <= p + 1e-15


def test_significance_stars():
    assert [significance_stars(p) for p in (0.001, 0.007, 0.03, 0.2)] == ["***", "**", "*", ""]
    with pytest.raises(ArgumentError):
        corr_p_value(0.1, 2)


@given(st.lists(st.floats(-20, 20), min_size=4, max_size=4))
def test_centering_invariance(offsets):
    rng = np.random.default_rng(1)
    links = [Link(0, 1), Link(1, 2), Link(2, 3)]
    res = rng.standard_normal((4, 3))
    pairs = [(links[0], links[1]), (links[1], links[2])]
    shifted = res + np.array(offsets)[:, None]
    assert pair_correlation(shifted, links, pairs)[0] == pytest.approx(pair_correlation(res, links, pairs)[0], abs=1e-9)


def test_pair_correlation_needs_samples():
    links = [Link(0, 1), Link(1, 2)]
    with pytest.raises(ArgumentError):
        pair_correlation(np.zeros((1, 2)), links, [(links[0], links[1])])


def test_fit_delta_recovers_exact_model(catalog):
    geoms = [e.geometry for e in catalog.reference_entries()]
    measured = [0.3 * model_corr(g, 0.25) for g in geoms]
    fit = fit_delta(measured, geoms)
    assert fit.delta_star == pytest.approx(0.25)
    assert fit.ratio == pytest.approx(0.3, rel=1e-9)
    assert fit.rho_c_star == pytest.approx(1.0)
    assert len(fit.rho_c) == 31


def test_residual_model_without_projection_is_plain_covariance(grid, sp, path_loss, grid_fc, catalog):
    ens = synthesize_ensemble(grid, path_loss, sp, 3, seed=2, n_freq=3, fc=grid_fc)
    fit = fit_path_loss(freq_average(ens), grid, per_experiment=False)
    entries = catalog.reference_entries()[:4]
    rows = measure_geometries(fit, grid, entries)
    rm = ResidualModel.from_fit(fit, grid, [r.pairs for r in rows], centred=False)
    np.testing.assert_allclose(rm.offset, 0.0, atol=1e-12)
    expect = [model_corr(catalog[r.geometry_id].geometry, 0.21) for r in rows]
    np.testing.assert_allclose(rm.regressor(0.21), expect, rtol=1e-9)


def test_measure_geometries_report_invariants(grid, sp, path_loss, grid_fc, catalog):
    ens = synthesize_ensemble(grid, path_loss, sp, 15, seed=0, fc=grid_fc)
    fit = fit_path_loss(freq_average(ens), grid)
    rows = measure_geometries(fit, grid, catalog.reference_entries())
    assert len(rows) == 28
    for r in rows:
        assert r.n_pairs >= 1 and -1 <= r.measured <= 1 and 0 <= r.p_value <= 1
        assert r.n_samples == 15 * r.n_pairs
