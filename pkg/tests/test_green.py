"""Green's function tables: quadrature values against the walk-series oracle,
exact symmetries, the stencil residual check, and the decay/entropy helpers."""

import itertools
import math

import numpy as np
import pytest

from sandharm.green import (
    GreenTable,
    QuadratureSpec,
    compute_green,
    decay_profile,
    entropy_quadrature,
    fundamental_residual,
    multiplier_table,
    tail_beyond,
    walk_series_oracle,
)
from sandharm.laurent import LaurentPoly, laplacian_poly


def test_symmetry_is_exact(table_d2_g4, table_d3_g6):
    t = table_d2_g4
    for n in [(1, 0), (3, 2), (7, 1), (16, 16)]:
        assert t.value(n) == t.value((-n[0], -n[1]))
        assert t.value(n) == t.value((n[1], n[0]))
        assert t.value(n) == t.value((n[0], -n[1]))
    t3 = table_d3_g6
    base = (1, 2, 3)
    vals = {t3.value(p) for p in itertools.permutations(base)}
    assert len(vals) == 1
    signs = {t3.value((s0 * 1, s1 * 2, s2 * 3)) for s0 in (1, -1) for s1 in (1, -1) for s2 in (1, -1)}
    assert len(signs) == 1


def test_critical_d2_center_zero_rest_negative(table_d2_g4):
    t = table_d2_g4
    assert t.value((0, 0)) == 0.0
    vals = t.values.copy()
    vals[t.radius, t.radius] = -1.0
    assert np.all(vals < 0)


def test_d3_tables_positive(table_d3_g6, table_d3_g7):
    assert np.all(table_d3_g6.values > 0)
    assert np.all(table_d3_g7.values > 0)


def test_closed_form_spot_values_d2(table_d2_g4):
    t = table_d2_g4
    assert abs(t.value((1, 0)) + 0.25) <= 1e-6
    assert abs(t.value((1, 1)) + 1 / math.pi) <= 1e-5
    assert abs(t.value((2, 1)) - (0.25 - 2 / math.pi)) <= 1e-5


def test_d3_center_matches_series(table_d3_g6):
    t = table_d3_g6
    oracle = walk_series_oracle(3, 6, (0, 0, 0))
    assert abs(t.value((0, 0, 0)) - oracle.value) <= oracle.err_bound + 10 * t.accuracy
    assert abs(oracle.value - 0.252731) <= 1e-5


def test_oracle_closed_forms():
    near = walk_series_oracle(2, 4, (1, 0))
    diag = walk_series_oracle(2, 4, (1, 1))
    assert abs(near.value + 0.25) <= near.err_bound + 1e-9
    assert near.err_bound < 1e-6
    assert abs(diag.value + 1 / math.pi) <= diag.err_bound + 1e-9


@pytest.mark.parametrize("fixture,span", [("table_d2_g4", 2), ("table_d2_g5", 2), ("table_d3_g6", 1)])
def test_oracle_agreement_near_origin(request, fixture, span):
    t = request.getfixturevalue(fixture)
    for site in itertools.product(range(span + 1), repeat=t.dim):
        if tuple(sorted(site, reverse=True)) != site:
            continue  # one representative per symmetry class
        oracle = walk_series_oracle(t.dim, t.gamma, site)
        assert abs(t.value(site) - oracle.value) <= oracle.err_bound + 10 * t.accuracy


def test_fundamental_residual_small(table_d2_g4, table_d2_g5, table_d3_g6, table_d3_g7):
    for t in (table_d2_g4, table_d2_g5, table_d3_g6, table_d3_g7):
        assert fundamental_residual(t) <= 10 * t.accuracy


def test_fundamental_residual_detects_corruption(table_d2_g4):
    t = table_d2_g4
    bad = np.array(t.values)
    bad[t.radius + 3, t.radius + 2] += 1e-3
    corrupted = GreenTable(t.dim, t.gamma, t.radius, bad, t.accuracy, t.method)
    assert fundamental_residual(corrupted) >= 9e-4


def test_stencil_multiplier_is_point_mass(table_d2_g4):
    t = table_d2_g4
    m = multiplier_table(laplacian_poly(2), t)
    tol = m.entry_error + 10 * t.accuracy
    expect = np.zeros_like(m.values)
    expect[m.radius, m.radius] = 1.0
    assert np.max(np.abs(m.values - expect)) <= tol


def test_cubed_difference_multiplier_decays(table_d2_g4):
    one = LaurentPoly.one(2)
    u1 = LaurentPoly(2, {(1, 0): 1})
    m = multiplier_table((one - u1) ** 3, table_d2_g4)
    prof = decay_profile(m.values)
    assert not prof.degenerate
    assert prof.exponent <= -2.7


def test_decay_profile_synthetic():
    R = 20
    grid = np.fromfunction(
        lambda i, j: 1.0 / np.maximum(np.maximum(abs(i - R), abs(j - R)), 1) ** 3,
        (2 * R + 1, 2 * R + 1),
    )
    prof = decay_profile(grid)
    assert abs(prof.exponent + 3.0) <= 0.1

    delta = np.zeros((9, 9))
    delta[4, 4] = 1.0
    prof2 = decay_profile(delta)
    assert prof2.degenerate
    assert prof2.exponent is None
    assert tail_beyond(prof2, 1) == 0.0


def test_dissipative_total_mass(table_d2_g5):
    # summing the fundamental relation over all sites gives (gamma - 2d) sum w = 1
    t = table_d2_g5
    total = float(t.values.sum())
    prof = decay_profile(t.values)
    budget = tail_beyond(prof, t.radius + 1) + t.values.size * t.accuracy
    assert abs(total - 1.0) <= budget


def test_entropy_large_gamma_bracket():
    h = entropy_quadrature(2, 100)
    assert math.log(96) <= h.value <= math.log(104)
    assert h.err_bound < 1e-6


def test_entropy_critical_values(entropy_d2_critical, entropy_d3_critical):
    assert abs(entropy_d2_critical.value - 1.166244) <= 1e-3
    assert abs(entropy_d3_critical.value - 1.673) <= 1e-3
    assert entropy_d2_critical.err_bound < 1e-3
    assert entropy_d3_critical.err_bound < 1e-3


def test_csv_round_trip(table_d3_g7):
    t = table_d3_g7
    back = GreenTable.from_csv(t.to_csv())
    assert back.dim == t.dim
    assert back.gamma == t.gamma
    assert back.radius == t.radius
    assert back.accuracy == t.accuracy
    assert np.array_equal(back.values, t.values)
    assert isinstance(back.gamma, int)


def test_csv_rejects_garbage():
    with pytest.raises(ValueError):
        GreenTable.from_csv("no header here\n1,2,3\n")


def test_value_outside_radius_raises(table_d3_g6):
    with pytest.raises(KeyError):
        table_d3_g6.value((9, 0, 0))


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(nodes_per_axis=4)
    with pytest.raises(ValueError):
        QuadratureSpec(nodes_per_axis=64, singularity_treatment="magic")
    with pytest.raises(ValueError):
        compute_green(2, 4, 20, QuadratureSpec(nodes_per_axis=64))
    with pytest.raises(ValueError):
        compute_green(2, 3.5, 4)
    with pytest.raises(ValueError):
        compute_green(1, 2, 4)
