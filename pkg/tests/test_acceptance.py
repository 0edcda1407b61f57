"""
端到端验收：精确树对照、解析解、M-解恒等式、压缩诊断、矩不等式
"""

import numpy as np
import pytest

from cli.commands import compare_surfaces
from core.grid import build_grid
from core.problem import problem_from_mapping
from norms.inequalities import check_moment_inequalities, kappa_p, kappa_p_quadrature
from oracles.catalog import analytic_eval, get_case, oracle_catalog
from oracles.tree_solver import exact_tree_solve
from solver.drivers import SolveOptions, solve
from stochastics.ensemble import enumerate_bernoulli_ensemble, generate_gaussian_ensemble
from stochastics.estimators import RegressionEstimator


TOL = 1e-10


@pytest.mark.parametrize("name", [case.name for case in oracle_catalog()])
def test_every_case_matches_tree(tree8, exact, name):
    spec = get_case(name).spec
    surface = solve(spec, tree8, exact, tol=TOL, max_iter=100)
    reference = exact_tree_solve(spec, tree8, tol=TOL / 100, max_iter=400)
    blocks = compare_surfaces(surface, reference, 10 * TOL, relative=False)
    assert surface.converged
    assert all(b.passed for b in blocks), [(b.block, b.max_abs) for b in blocks]


@pytest.mark.parametrize("name", ["det", "mart", "quad"])
def test_discrete_closed_forms_are_reproduced(tree8, exact, name):
    case = get_case(name)
    surface = solve(case.spec, tree8, exact, tol=TOL, max_iter=100)
    closed = analytic_eval(case, tree8)
    assert np.max(np.abs(surface.y.values - closed.y.values)) < 1e-10
    assert np.max(np.abs(surface.z.values - closed.z.values)) < 1e-10


def test_linear_case_relative_error_shrinks(exact, linear_case):
    worst = []
    for steps in (4, 8, 12):
        ensemble = enumerate_bernoulli_ensemble(build_grid(1.0, steps))
        surface = solve(linear_case.spec, ensemble, exact, tol=TOL, max_iter=100)
        closed = analytic_eval(linear_case, ensemble).y.values
        # t = 0 处 W = 0，两边都为 0
        diff = np.abs(surface.y.values[:, 1:] - closed[:, 1:]).max(axis=0)
        worst.append(float(np.max(diff / np.abs(closed[:, 1:]).max(axis=0))))
    assert worst[0] > worst[1] > worst[2]
    assert worst[2] <= 0.05


def test_m_identity_on_enumeration(tree8, exact):
    for name in ("linear-bsde", "zeta-coupled", "sin-clipped"):
        surface = solve(get_case(name).spec, tree8, exact, tol=TOL, max_iter=100)
        assert surface.diagnostics.m_identity_residual <= 1e-10


@pytest.mark.slow
def test_m_identity_under_regression(linear_case):
    ensemble = generate_gaussian_ensemble(seed=2, paths=10000, grid=build_grid(1.0, 8))
    surface = solve(linear_case.spec, ensemble, RegressionEstimator(3), tol=1e-8, max_iter=50)
    assert surface.converged
    assert surface.diagnostics.m_identity_relative_l2 <= 0.1


def test_accepted_subintervals_contract(tree8, exact):
    for name in ("linear-bsde", "zeta-coupled", "sin-clipped"):
        surface = solve(get_case(name).spec, tree8, exact, tol=TOL, max_iter=100)
        for report in surface.diagnostics.subintervals:
            assert report.converged
            assert all(r < 1.0 for r in report.ratios[1:])
            assert all(b < a for a, b in zip(report.distances[1:], report.distances[2:]))


def test_halving_rescues_over_long_interval(tree8, exact):
    # κ 取得过大，规则给出整个 [0, T]
    spec = problem_from_mapping({"terminal": "x_0", "generator": "4 * y_0", "p": 1.5,
                                 "lipschitz_l1": 4.0, "lipschitz_l2": 0.0, "lipschitz_l3": 0.0})
    options = SolveOptions(kappa_target=4.0, c_cal=0.125)
    surface = solve(spec, tree8, exact, tol=1e-12, max_iter=200, options=options)
    assert surface.plan.eta_rule == pytest.approx(1.0)
    assert surface.converged
    assert any(r.halvings > 0 for r in surface.diagnostics.subintervals)


@pytest.mark.slow
def test_moment_ratio_matches_gaussian_constant():
    ensemble = generate_gaussian_ensemble(seed=4, paths=100000, grid=build_grid(1.0, 4))
    surface = analytic_eval(get_case("mart"), ensemble)
    upper, _ = check_moment_inequalities(surface.z, 1.5, ensemble)
    assert upper.ratio == pytest.approx(kappa_p_quadrature(1.5), abs=0.05)
    assert kappa_p(1.5) == pytest.approx(kappa_p_quadrature(1.5), rel=1e-8)


def test_quadratic_moment_ratio_is_exact_on_enumeration(tree8):
    surface = analytic_eval(get_case("mart"), tree8)
    upper, lower = check_moment_inequalities(surface.z, 2.0, tree8)
    assert upper.ratio == pytest.approx(1.0, abs=1e-12)
    assert lower.ratio == pytest.approx(1.0, abs=1e-12)
