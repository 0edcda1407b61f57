import numpy as np
import pytest

from core.grid import PartitionPlan, TimeGrid, build_grid
from core.problem import (PNormConfig, SolveMode, dump_problem, load_problem, problem_from_mapping,
                          problem_to_mapping, validate_problem)
from core.surfaces import AdaptedProcess, TwoParamField
from utils.error_handler import ErrorCode, GridError, OrderingError, PartitionError, ValidationError


# ---------------------------------------------------------------- 网格

def test_build_grid_quarter_steps():
    grid = build_grid(1.0, 4)
    assert grid.h == 0.25
    assert grid.nodes.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_build_grid_single_step():
    assert build_grid(2.0, 1).nodes.tolist() == [0.0, 2.0]


@pytest.mark.parametrize("horizon, steps", [(1.0, 0), (0.0, 4), (-1.0, 4), (1.0, 2.5)])
def test_build_grid_rejects_invalid(horizon, steps):
    with pytest.raises(GridError):
        build_grid(horizon, steps)


def test_grid_nodes_end_exactly_at_horizon():
    grid = build_grid(0.7, 3)
    assert grid.nodes[0] == 0.0
    assert grid.nodes[-1] == 0.7
    assert np.all(np.diff(grid.nodes) > 0)


def test_grid_nodes_are_read_only():
    with pytest.raises(ValueError):
        build_grid(1.0, 4).nodes[1] = 0.3


# ---------------------------------------------------------------- 分区方案

def test_partition_plan_subintervals_run_right_to_left():
    plan = PartitionPlan(boundaries=(8, 5, 2, 0), eta=0.375)
    assert plan.subintervals() == [(5, 8), (2, 5), (0, 2)]
    assert plan.covers(TimeGrid(1.0, 8))
    assert not plan.covers(TimeGrid(1.0, 4))


@pytest.mark.parametrize("boundaries", [(8, 4), (8, 8, 0), (4, 6, 0), (0,)])
def test_partition_plan_rejects_bad_boundaries(boundaries):
    with pytest.raises(PartitionError):
        PartitionPlan(boundaries=boundaries, eta=0.5)


def test_partition_plan_split_halves_subinterval():
    plan = PartitionPlan(boundaries=(8, 0), eta=1.0).split(8)
    assert plan.boundaries == (8, 4, 0)
    assert plan.split(4).boundaries == (8, 4, 2, 0)


def test_partition_plan_split_rejects_single_step():
    with pytest.raises(PartitionError):
        PartitionPlan(boundaries=(2, 1, 0), eta=0.5).split(2)


# ---------------------------------------------------------------- 问题定义

def _linear_mapping(**extra):
    mapping = {"name": "lin", "terminal": "x_0", "generator": "0.5 * y_0", "p": 1.5,
               "lipschitz_l1": 0.5, "lipschitz_l2": 0.0, "lipschitz_l3": 0.0}
    mapping.update(extra)
    return mapping


def test_pnorm_conjugate():
    assert PNormConfig(1.5).q == pytest.approx(3.0)
    assert 1 / 1.25 + 1 / PNormConfig(1.25).q == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValidationError):
        PNormConfig(1.0)


def test_validate_accepts_constant_lipschitz():
    report = validate_problem(problem_from_mapping(_linear_mapping()))
    assert report.passed
    assert {c.name for c in report.checks} >= {"exponent", "mode_exponent", "zeta_free", "lipschitz_l1"}


def test_validate_rejects_msolution_with_p_above_two():
    report = validate_problem(problem_from_mapping(_linear_mapping(p=3.0)))
    assert not report.check("mode_exponent").passed
    with pytest.raises(ValidationError) as info:
        report.raise_if_failed()
    assert info.value.error_code == ErrorCode.MODE_EXPONENT_MISMATCH


def test_validate_rejects_p_not_above_one():
    report = validate_problem(problem_from_mapping(_linear_mapping(p=1.0)))
    with pytest.raises(ValidationError) as info:
        report.raise_if_failed()
    assert info.value.error_code == ErrorCode.EXPONENT_INVALID


def test_validate_rejects_zeta_in_adapted_mode():
    spec = problem_from_mapping(_linear_mapping(mode="adapted", generator="0.2 * zeta_0_0", p=2.0))
    report = validate_problem(spec)
    assert not report.check("zeta_free").passed
    with pytest.raises(ValidationError) as info:
        report.raise_if_failed()
    assert info.value.error_code == ErrorCode.ZETA_IN_ADAPTED_MODE


def test_validate_adapted_mode_accepts_large_p():
    spec = problem_from_mapping(_linear_mapping(mode="adapted", p=3.0))
    assert validate_problem(spec).passed


def test_validate_expression_lipschitz_integrability():
    spec = problem_from_mapping(_linear_mapping(lipschitz_l1="0.25 * exp(-(s - t)) + 0.2"))
    assert validate_problem(spec).check("lipschitz_l1").passed

    blowup = problem_from_mapping(_linear_mapping(lipschitz_l1="exp(100 * s)"))
    check = validate_problem(blowup).check("lipschitz_l1")
    assert not check.passed
    assert check.error_code == ErrorCode.HYPOTHESIS_FAILED


def test_problem_requires_terminal_and_generator():
    with pytest.raises(ValidationError):
        problem_from_mapping({"generator": "0"})


def test_problem_component_count_must_match_m():
    with pytest.raises(ValidationError):
        problem_from_mapping({"m": 2, "terminal": "x_0", "generator": "0; 0"})


def test_problem_serialization_round_trip(tmp_path, problems_dir):
    for name in ("linear-bsde", "zeta-coupled", "adapted-only", "vector-kernel"):
        spec = load_problem(problems_dir / f"{name}.conf")
        target = tmp_path / f"{name}.conf"
        dump_problem(spec, target)
        again = load_problem(target)
        assert again == spec
        assert problem_to_mapping(again) == problem_to_mapping(spec)


def test_problem_round_trip_keeps_float_bits(tmp_path):
    spec = problem_from_mapping(_linear_mapping(generator="0.1 * y_0 + 0.30000000000000004", p=1.3333333333333333))
    dump_problem(spec, tmp_path / "p.conf")
    again = load_problem(tmp_path / "p.conf")
    assert again.p == spec.p
    assert again.generator == spec.generator


def test_load_problem_missing_file(tmp_path):
    with pytest.raises(ValidationError) as info:
        load_problem(tmp_path / "absent.conf")
    assert info.value.error_code == ErrorCode.FILE_NOT_FOUND


def test_generator_requires_zeta_when_referenced():
    spec = problem_from_mapping(_linear_mapping(generator="zeta_0_0"))
    w = np.zeros((3, 1))
    with pytest.raises(OrderingError):
        spec.generator_values(0.0, 0.5, np.zeros((3, 1)), np.zeros((3, 1, 1)), None, w)


def test_spec_mode_is_coerced_from_text():
    spec = problem_from_mapping(_linear_mapping(mode="adapted"))
    assert spec.mode is SolveMode.ADAPTED


# ---------------------------------------------------------------- 曲面

def test_adapted_process_is_read_only():
    y = AdaptedProcess(np.ones((2, 3, 1)))
    with pytest.raises(ValueError):
        y.values[0, 0, 0] = 2.0
    assert y.mean().shape == (3, 1)


def test_field_without_m_block_rejects_lower_reads():
    field = TwoParamField.zeros(2, 3, 1, 1, has_m_block=False)
    with pytest.raises(OrderingError):
        field.entry(2, 1)
    with pytest.raises(OrderingError):
        field.set_entry(2, 1, np.zeros((2, 1, 1)))


def test_field_unfilled_entry_raises():
    field = TwoParamField.zeros(2, 3, 1, 1, has_m_block=True)
    with pytest.raises(OrderingError):
        field.entry(0, 0)
    field.set_entry(0, 0, np.full((2, 1, 1), 3.0))
    assert field.entry(0, 0)[0, 0, 0] == 3.0
    assert not field.is_complete()


def test_field_freeze_blocks_writes():
    field = TwoParamField.from_array(np.zeros((2, 3, 2, 1, 1)), has_m_block=True).freeze()
    assert field.is_complete()
    with pytest.raises(OrderingError):
        field.set_row(1, 0, np.zeros((2, 1, 1, 1)))


def test_field_from_array_clears_lower_block_in_adapted_mode():
    field = TwoParamField.from_array(np.ones((1, 3, 2, 1, 1)), has_m_block=False)
    assert field.values[0, 2, 0, 0, 0] == 0.0
    assert field.values[0, 0, 1, 0, 0] == 1.0
    assert field.region_mask().tolist() == [[True, True], [False, True], [False, False]]
