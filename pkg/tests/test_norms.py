import math

import numpy as np
import pytest

from core.grid import build_grid
from dsl.expression import ExprContext, parse_expr
from norms.inequalities import check_moment_inequalities, kappa_p, kappa_p_quadrature
from norms.norms import NormKind, family_row_norm, hp_norm, mp_norm, mp_norm_distance, upper_mask
from norms.stability import perturbed_problem, stability_probe
from oracles.catalog import analytic_eval, get_case
from stochastics.ensemble import generate_gaussian_ensemble
from utils.error_handler import GridError, OrderingError


# ---------------------------------------------------------------- 离散范数

def test_deterministic_norm(tree8, grid8):
    surface = analytic_eval(get_case("det"), tree8)
    report = hp_norm(surface.y, surface.z, 1.5, grid8)
    expected = grid8.h * sum((1.0 + grid8.t(i)) ** 1.5 for i in range(8))
    assert report.kind is NormKind.HP
    assert report.z_part == 0.0
    assert report.value == pytest.approx(expected ** (1 / 1.5), rel=1e-12)


def test_martingale_norm_regions(tree8, grid8):
    surface = analytic_eval(get_case("mart"), tree8)
    full = hp_norm(surface.y, surface.z, 1.5, grid8)
    upper = hp_norm(surface.y, surface.z, 1.5, grid8, full_square=False)
    assert full.z_part == pytest.approx(1.0, rel=1e-12)
    assert upper.kind is NormKind.H0P
    assert upper.z_part == pytest.approx(grid8.h * sum((1.0 - grid8.t(i)) ** 0.75 for i in range(8)), rel=1e-12)
    assert mp_norm(surface.y, surface.z, 1.5, grid8).z_part == pytest.approx(upper.z_part, rel=1e-12)


def test_full_square_requires_m_block(tree8, grid8):
    surface = analytic_eval(get_case("adapted-only"), tree8)
    with pytest.raises(OrderingError):
        hp_norm(surface.y, surface.z, 2.0, grid8, full_square=True)
    assert hp_norm(surface.y, surface.z, 2.0, grid8).kind is NormKind.H0P


def test_mp_distance(tree8, grid8):
    surface = analytic_eval(get_case("mart"), tree8)
    zero = (np.zeros_like(surface.y.values), np.zeros_like(surface.z.values))
    assert mp_norm_distance((surface.y, surface.z), (surface.y, surface.z), 1.5, grid8) == 0.0
    assert mp_norm_distance((surface.y, surface.z), zero, 1.5, grid8) == pytest.approx(
        mp_norm(surface.y, surface.z, 1.5, grid8).value, rel=1e-12)


def test_mp_distance_shape_mismatch(grid8):
    a = (np.zeros((4, 9, 1)), np.zeros((4, 9, 8, 1, 1)))
    b = (np.zeros((4, 9, 1)), np.zeros((4, 9, 7, 1, 1)))
    with pytest.raises(GridError):
        mp_norm_distance(a, b, 1.5, grid8)


def test_family_row_norm():
    lam = np.zeros((3, 5, 1))
    mu = np.ones((3, 4, 1, 1))
    assert family_row_norm(lam, mu, 1.5, 0.25) == pytest.approx(1.0)
    lam[:, 2, 0] = 2.0
    assert family_row_norm(lam, mu, 2.0, 0.25) == pytest.approx(math.sqrt(5.0))


def test_upper_mask():
    mask = upper_mask(3, upper=2)
    assert mask.tolist() == [[True, True, False], [False, True, False], [False, False, False], [False] * 3]


# ---------------------------------------------------------------- 矩不等式

@pytest.mark.parametrize("p, expected", [(2.0, 1.0), (1.0, math.sqrt(2 / math.pi)), (1.5, 0.86004)])
def test_kappa_values(p, expected):
    assert kappa_p(p) == pytest.approx(expected, abs=1e-5)
    assert kappa_p_quadrature(p) == pytest.approx(kappa_p(p), rel=1e-8)


def test_moment_ratio_of_brownian_motion():
    ensemble = generate_gaussian_ensemble(seed=1, paths=40000, grid=build_grid(1.0, 4))
    surface = analytic_eval(get_case("mart"), ensemble)
    upper, lower = check_moment_inequalities(surface.z, 1.5, ensemble)
    assert upper.ratio == pytest.approx(kappa_p(1.5), abs=0.02)
    assert lower.ratio == pytest.approx(1.0 / upper.ratio)


def test_moment_check_needs_m_block(tree8):
    surface = analytic_eval(get_case("adapted-only"), tree8)
    with pytest.raises(OrderingError):
        check_moment_inequalities(surface.z, 1.5, tree8)


def test_moment_check_rejects_non_positive_p(tree8):
    surface = analytic_eval(get_case("mart"), tree8)
    with pytest.raises(ValueError):
        check_moment_inequalities(surface.z, 0.0, tree8)


def test_moment_check_of_zero_field(tree8):
    surface = analytic_eval(get_case("det"), tree8)
    upper, lower = check_moment_inequalities(surface.z, 1.5, tree8)
    assert upper.ratio is None and lower.ratio is None


# ---------------------------------------------------------------- 稳定性

def test_affine_problem_scales_linearly(tree8, exact, linear_case):
    delta = parse_expr("x_0", ExprContext.TERMINAL)
    report = stability_probe(linear_case.spec, delta, 1.0, tree8, exact, tol=1e-13, max_iter=100)
    assert report.scaling_ratio == pytest.approx(2.0, abs=1e-10)
    assert report.input_distance_double == pytest.approx(2.0 * report.input_distance)
    assert report.c_hat is not None and 0.0 < report.c_hat < float("inf")
    assert len(report.rows) == 9


def test_stability_probe_checks_components(tree8, exact, linear_case):
    delta = parse_expr("x_0", ExprContext.TERMINAL)
    with pytest.raises(ValueError):
        stability_probe(linear_case.spec, [delta, delta], 1.0, tree8, exact)


def test_perturbed_problem_adds_scaled_terminal(linear_case):
    delta = parse_expr("1", ExprContext.TERMINAL)
    spec = perturbed_problem(linear_case.spec, 0.5, [delta])
    values = spec.terminal_values(0.0, np.array([[2.0]]))
    assert values.tolist() == [[2.5]]
    assert spec.generator == linear_case.spec.generator
