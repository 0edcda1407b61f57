"""
运行配置
把 Config 与命令行覆盖项整理成经过校验的 RunConfig
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from core.problem import ProblemSpec, SolveMode, load_problem, problem_from_mapping, validate_problem
from oracles.catalog import get_case
from solver.drivers import SolveOptions
from solver.picard import INITIAL_ITERATES
from stochastics.estimators import EstimatorFactory
from utils.config import Config
from utils.error_handler import ConfigError, ErrorCode, ValidationError

# problem 段中不属于问题定义本身的键
_PROBLEM_META_KEYS = ("file", "case")


@dataclass
class RunConfig:
    """一次求解或验证的全部设置"""
    problem: ProblemSpec
    problem_source: str
    estimator: str = "regress:3"
    ensemble_kind: str = "gaussian"
    paths: int = 10000
    steps: int = 8
    seed: int = 7
    tol: float = 1e-8
    max_iter: int = 50
    kappa_target: float = 0.5
    c_cal: float = 8.0
    strict_partition: bool = False
    initial: str = "zero"
    halving_limit: int = 8
    workers: int = 1
    memory_check: bool = True
    output_dir: Path = Path("output")
    quantiles: List[float] = field(default_factory=lambda: [0.05, 0.5, 0.95])
    include_timing: bool = False
    per_path_dump: bool = False
    log_level: str = "INFO"
    log_dir: str = "logs"

    @classmethod
    def from_config(cls, config: Config, overrides: Optional[Mapping[str, Any]] = None,
                    problem: Optional[ProblemSpec] = None) -> "RunConfig":
        """
        从配置构造

        Args:
            config: 已加载的配置
            overrides: 点分键的覆盖项，如 {"solver.tol": 1e-10}
            problem: 直接给定的问题（verify 使用目录中的问题）

        Raises:
            ConfigError: 配置值无效
            ValidationError: 问题定义无效
        """
        for key, value in (overrides or {}).items():
            if value is not None:
                config.set(key, value)

        if problem is None:
            problem, source = resolve_problem(config)
        else:
            source = f"case:{problem.name}"
        problem = _apply_problem_overrides(problem, config)

        try:
            run = cls(
                problem=problem,
                problem_source=source,
                estimator=str(config.get("solver.estimator", "regress:3")).strip().lower(),
                ensemble_kind=str(config.get("ensemble.kind", "gaussian")),
                paths=int(config.get("ensemble.paths", 10000)),
                steps=int(config.get("ensemble.grid", 8)),
                seed=int(config.get("ensemble.seed", 7)),
                tol=float(config.get("solver.tol", 1e-8)),
                max_iter=int(config.get("solver.max_iter", 50)),
                kappa_target=float(config.get("solver.kappa_target", 0.5)),
                c_cal=float(config.get("solver.c_cal", 8.0)),
                strict_partition=bool(config.get("solver.strict_partition", False)),
                initial=str(config.get("solver.initial", "zero")),
                halving_limit=int(config.get("solver.halving_limit", 8)),
                workers=int(config.get("runtime.workers", 1)),
                memory_check=bool(config.get("runtime.memory_check", True)),
                output_dir=Path(config.get("output.folder", "output")),
                quantiles=[float(q) for q in config.get("output.quantiles", [0.05, 0.5, 0.95])],
                include_timing=bool(config.get("output.include_timing", False)),
                per_path_dump=bool(config.get("output.per_path_dump", False)),
                log_level=str(config.get("logging.level", "INFO")).upper(),
                log_dir=str(config.get("logging.folder", "logs")),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"配置值类型错误: {e}", original_error=e)

        if run.estimator == "exact":
            # 精确估计器只在枚举路径集上成立
            run.ensemble_kind = "bernoulli"
            run.paths = 2 ** (run.steps * problem.d)
        run.validate()
        return run

    def validate(self):
        """检查数值范围与问题假设"""
        problems = []
        if self.paths < 1:
            problems.append(f"ensemble.paths = {self.paths}")
        if self.steps < 1:
            problems.append(f"ensemble.grid = {self.steps}")
        if self.seed < 0:
            problems.append(f"ensemble.seed = {self.seed}")
        if not self.tol >= 0:
            problems.append(f"solver.tol = {self.tol}")
        if self.max_iter < 1:
            problems.append(f"solver.max_iter = {self.max_iter}")
        if not (self.kappa_target > 0 and self.c_cal > 0):
            problems.append(f"solver.kappa_target = {self.kappa_target}, solver.c_cal = {self.c_cal}")
        if self.initial not in INITIAL_ITERATES:
            problems.append(f"solver.initial = {self.initial}")
        if self.halving_limit < 0:
            problems.append(f"solver.halving_limit = {self.halving_limit}")
        if self.workers < 1:
            problems.append(f"runtime.workers = {self.workers}")
        if self.ensemble_kind not in ("gaussian", "bernoulli", "bernoulli-enumerated"):
            problems.append(f"ensemble.kind = {self.ensemble_kind}")
        if any(not 0.0 <= q <= 1.0 for q in self.quantiles):
            problems.append(f"output.quantiles = {self.quantiles}")
        if problems:
            raise ConfigError("; ".join(problems))

        EstimatorFactory.create(self.estimator)
        validate_problem(self.problem).raise_if_failed()

    def solve_options(self) -> SolveOptions:
        return SolveOptions(
            kappa_target=self.kappa_target, c_cal=self.c_cal, strict_partition=self.strict_partition,
            initial=self.initial, halving_limit=self.halving_limit, workers=self.workers,
            memory_check=self.memory_check,
        )

    def echo(self) -> Dict[str, Any]:
        """报告中的配置回显（不含只影响运行环境的设置）"""
        return {
            "problem_source": self.problem_source,
            "estimator": self.estimator,
            "ensemble_kind": self.ensemble_kind,
            "paths": self.paths,
            "steps": self.steps,
            "seed": self.seed,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "kappa_target": self.kappa_target,
            "c_cal": self.c_cal,
            "strict_partition": self.strict_partition,
            "initial": self.initial,
            "halving_limit": self.halving_limit,
            "quantiles": list(self.quantiles),
        }


def resolve_problem(config: Config) -> Tuple[ProblemSpec, str]:
    """
    按优先级确定问题：problem.case > problem.file > problem 段中的内联定义

    Returns:
        (问题, 来源描述)
    """
    case = config.get("problem.case")
    if case:
        return get_case(str(case)).spec, f"case:{case}"

    file = config.get("problem.file")
    if file:
        path = Path(file)
        if not path.is_absolute() and not path.exists() and config.config_file is not None:
            path = config.config_file.parent / path
        if not path.exists():
            raise ConfigError(str(file), ErrorCode.FILE_NOT_FOUND)
        return load_problem(path), f"file:{file}"

    section = config.section("problem")
    inline = {k: v for k, v in section.items() if k not in _PROBLEM_META_KEYS and v is not None}
    if "terminal" not in inline or "generator" not in inline:
        raise ConfigError("没有问题定义：需要 problem.case、problem.file 或内联的 terminal/generator")
    return problem_from_mapping(inline), "inline"


def _apply_problem_overrides(problem: ProblemSpec, config: Config) -> ProblemSpec:
    """problem.mode 与 problem.p 覆盖问题文件中的取值"""
    changes: Dict[str, Any] = {}
    mode = config.get("problem.mode")
    if mode:
        try:
            changes["mode"] = SolveMode(mode)
        except ValueError as e:
            raise ValidationError(f"未知的 mode '{mode}'", original_error=e)
    p = config.get("problem.p")
    if p is not None:
        try:
            changes["p"] = float(p)
        except (TypeError, ValueError) as e:
            raise ValidationError(f"p 无法解析: {p!r}", ErrorCode.EXPONENT_INVALID, e)
    return replace(problem, **changes) if changes else problem
