import math

import numpy as np
import pytest

from linkshadow.covariance import ShadowingParams, shadowing_corr
from linkshadow.errors import ArgumentError, ResourceError
from linkshadow.field import (
    FieldRealization,
    FieldSampler,
    empirical_pair_corr,
    line_integral_weights,
    make_rng,
    sample_field,
    shadowing_by_line_integral,
)

SP = ShadowingParams(0.21, 1.0, 1.0)


def test_rng_is_deterministic():
    assert make_rng(5).standard_normal() == make_rng(5).standard_normal()
    assert make_rng(5).standard_normal() != make_rng(6).standard_normal()


def test_point_covariance_matches_kernel():
    h = 0.03
    fs = FieldSampler((0, 1.5, 0, 1.5), h, SP)
    vals = np.array([v[10:40, 25] for v in fs.iter_values(400, seed=1)])
    var = vals.var()
    assert var == pytest.approx(SP.kernel_prefactor, rel=0.05)
    lag = 3
    c = np.mean(vals[:, :-lag] * vals[:, lag:]) / var
    assert c == pytest.approx(math.exp(-lag * h / SP.delta_m), abs=0.03)


def test_resolution_guard():
    with pytest.raises(ArgumentError):
        FieldSampler((0, 1, 0, 1), 0.05, SP)


def test_memory_budget():
    with pytest.raises(ResourceError) as exc:
        FieldSampler((0, 50, 0, 50), 0.02, SP, memory_budget=1 << 20)
    assert exc.value.required_bytes > 1 << 20


def test_dump_roundtrip(tmp_path):
    f = sample_field((0, 1, 0, 1), 0.04, SP, seed=3)
    f.dump(tmp_path / "f.bin")
    back = FieldRealization.load(tmp_path / "f.bin")
    np.testing.assert_array_equal(back.values, f.values)
    assert back.h == f.h and back.seed == 3


def test_line_integral_of_constant_field():
    f = FieldRealization((0.0, 0.0), 0.04, np.ones((30, 30)))
    seg = ((0.1, 0.2), (0.9, 0.8))
    # normalised integral of 1 over a length-d link is sqrt(d)
    assert shadowing_by_line_integral(f, seg) == pytest.approx(math.sqrt(1.0), rel=1e-9)
    with pytest.raises(ArgumentError):
        line_integral_weights((0, 0), 0.04, (30, 30), ((0, 0), (5, 0)))


def test_field_oracle_agrees_with_quadrature():
    sa = ((0.0, 0.0), (1.22, 0.0))
    sb = ((0.0, 0.0), (0.0, 1.22))
    rho, se = empirical_pair_corr(SP, sa, sb, 600, seed=11)
    assert abs(rho - shadowing_corr(SP, sa, sb)) <= 3 * se
