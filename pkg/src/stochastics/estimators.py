"""
条件期望与鞅表示系数估计器

两种实现共用一个接口:
    ExactPrefixEstimator: 在枚举的 Bernoulli 路径集上按前缀分组求平均，结果精确
    RegressionEstimator: 对 W(t_j) 的多项式基做最小二乘回归
"""

import itertools
import threading
from abc import ABC, abstractmethod
from collections import Counter
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.surfaces import EnsembleKind, PathEnsemble
from utils.error_handler import ErrorCode, EstimatorError
from utils.logger import LoggerMixin


class CondExpEstimator(LoggerMixin, ABC):
    """条件期望估计器接口"""

    kind: str = ""

    @abstractmethod
    def cond_exp(self, values: np.ndarray, ensemble: PathEnsemble, step: int) -> np.ndarray:
        """
        E[V | F_{t_step}] 的逐路径估计

        Args:
            values: 形状 (M, ...) 的逐路径取值
            ensemble: 路径集
            step: 时间指标 j ∈ [0, N]

        Returns:
            与 values 同形状、F_{t_j} 可测的数组
        """

    def martingale_coeffs(self, values: np.ndarray, ensemble: PathEnsemble, step: int) -> np.ndarray:
        """
        (1/h)·E[V ⊗ ΔW_j | F_{t_j}]，形状 (M, ..., d)
        """
        dw = ensemble.increments[:, step, :]
        shape = (values.shape[0],) + (1,) * (values.ndim - 1) + (dw.shape[1],)
        product = values[..., None] * dw.reshape(shape)
        return self.cond_exp(product, ensemble, step) / ensemble.grid.h

    @property
    def fallback_counts(self) -> Dict[int, int]:
        return {}

    def reset(self):
        """清除按调用累计的诊断"""

    @property
    def label(self) -> str:
        return self.kind


class ExactPrefixEstimator(CondExpEstimator):
    """前缀分组平均：前 j 步增量相同的路径构成一组"""

    kind = "exact"

    def cond_exp(self, values: np.ndarray, ensemble: PathEnsemble, step: int) -> np.ndarray:
        if ensemble.kind is not EnsembleKind.BERNOULLI:
            raise EstimatorError("exact 估计器只接受枚举的 Bernoulli 路径集", ErrorCode.ESTIMATOR_KIND)
        d = ensemble.dim
        groups = 2 ** (step * d)
        size = values.shape[0] // groups
        if groups * size != values.shape[0]:
            raise EstimatorError(f"路径数 {values.shape[0]} 不是 2^(N·d)", ErrorCode.ESTIMATOR_KIND)
        means = values.reshape((groups, size) + values.shape[1:]).mean(axis=1)
        return np.repeat(means, size, axis=0)


def monomial_exponents(dim: int, degree: int) -> List[Tuple[int, ...]]:
    """总次数不超过 degree 的单项式指数，按总次数升序、同次数按字典序"""
    exponents = []
    for total in range(degree + 1):
        for combo in itertools.product(range(total + 1), repeat=dim):
            if sum(combo) == total:
                exponents.append(combo)
    return sorted(exponents, key=lambda e: (sum(e), tuple(-x for x in e)))


def polynomial_basis(points: np.ndarray, degree: int) -> np.ndarray:
    """points 形状 (M, d) -> 设计矩阵 (M, 单项式个数)"""
    columns = []
    for exponent in monomial_exponents(points.shape[1], degree):
        column = np.ones(points.shape[0])
        for l, power in enumerate(exponent):
            if power:
                column = column * points[:, l] ** power
        columns.append(column)
    return np.stack(columns, axis=1)


class RegressionEstimator(CondExpEstimator):
    """最小二乘回归：基函数为 W(t_j) 各分量的多项式，默认 3 次"""

    kind = "regress"

    def __init__(self, degree: int = 3):
        super().__init__()
        if degree < 0:
            raise EstimatorError(f"回归次数必须 ≥ 0: {degree}", ErrorCode.ESTIMATOR_KIND)
        self.degree = int(degree)
        self._fallbacks: Counter = Counter()
        self._degrees: Dict[Tuple[int, int], Tuple[np.ndarray, int]] = {}
        self._lock = threading.Lock()

    @property
    def label(self) -> str:
        return f"regress:{self.degree}"

    @property
    def fallback_counts(self) -> Dict[int, int]:
        with self._lock:
            return dict(sorted(self._fallbacks.items()))

    def reset(self):
        with self._lock:
            self._fallbacks.clear()
            self._degrees.clear()

    def _full_rank_degree(self, points: np.ndarray, step: int) -> Tuple[np.ndarray, int]:
        for degree in range(self.degree, -1, -1):
            design = polynomial_basis(points, degree)
            if np.linalg.matrix_rank(design) == design.shape[1]:
                if degree < self.degree:
                    self.logger.warning(f"第 {step} 步设计矩阵秩不足，回归次数降为 {degree}")
                return design, degree
        raise EstimatorError(f"第 {step} 步无法构造满秩设计矩阵")

    def _design(self, ensemble: PathEnsemble, step: int) -> Tuple[np.ndarray, int]:
        """返回满秩设计矩阵与实际使用的次数；秩不足时逐次降低次数，结果按 (路径集, 步) 缓存"""
        points = ensemble.values[:, step, :]
        if step == 0 or not np.any(points):
            # F_0 平凡，只有常数项
            return np.ones((points.shape[0], 1)), 0
        key = (id(ensemble.values), step)
        with self._lock:
            cached = self._degrees.get(key)
        if cached is not None and cached[0] is ensemble.values:
            degree = cached[1]
            design = polynomial_basis(points, degree)
        else:
            design, degree = self._full_rank_degree(points, step)
            with self._lock:
                # 持有数组引用，id 不会被复用
                self._degrees[key] = (ensemble.values, degree)
        if degree < self.degree:
            with self._lock:
                self._fallbacks[step] += 1
        return design, degree

    def fit_coefficients(self, values: np.ndarray, ensemble: PathEnsemble, step: int) -> Tuple[np.ndarray, int]:
        """
        回归系数（单项式按总次数升序）及实际使用的次数

        Args:
            values: 形状 (M,) 或 (M, k)
        """
        design, degree = self._design(ensemble, step)
        try:
            coeffs, *_ = np.linalg.lstsq(design, values.reshape(values.shape[0], -1), rcond=None)
        except np.linalg.LinAlgError as e:
            raise EstimatorError(str(e), original_error=e)
        if values.ndim == 1:
            coeffs = coeffs[:, 0]
        return coeffs, degree

    def cond_exp(self, values: np.ndarray, ensemble: PathEnsemble, step: int) -> np.ndarray:
        design, _ = self._design(ensemble, step)
        flat = values.reshape(values.shape[0], -1)
        try:
            coeffs, *_ = np.linalg.lstsq(design, flat, rcond=None)
        except np.linalg.LinAlgError as e:
            raise EstimatorError(str(e), original_error=e)
        return (design @ coeffs).reshape(values.shape)


class EstimatorFactory:
    """按命令行语法创建估计器: exact | regress | regress:<deg>"""

    @staticmethod
    def create(spec: str) -> CondExpEstimator:
        text = (spec or "").strip().lower()
        if text == "exact":
            return ExactPrefixEstimator()
        if text == "regress":
            return RegressionEstimator()
        if text.startswith("regress:"):
            try:
                return RegressionEstimator(int(text.split(":", 1)[1]))
            except ValueError as e:
                raise EstimatorError(f"无法解析回归次数: '{spec}'", ErrorCode.ESTIMATOR_KIND, e)
        raise EstimatorError(f"未知的估计器: '{spec}'", ErrorCode.ESTIMATOR_KIND)


def cond_exp(estimator: CondExpEstimator, values: np.ndarray, ensemble: PathEnsemble, step: int) -> np.ndarray:
    return estimator.cond_exp(values, ensemble, step)


def martingale_coeffs(estimator: CondExpEstimator, values: np.ndarray, ensemble: PathEnsemble,
                      step: int) -> np.ndarray:
    return estimator.martingale_coeffs(values, ensemble, step)


def check_adapted(values: np.ndarray, ensemble: PathEnsemble, step: int, atol: float = 0.0) -> Optional[bool]:
    """
    前缀共享检验：前 step 步增量相同的路径取值是否一致

    Returns:
        Bernoulli 路径集上返回 True/False；高斯路径集无法检验，返回 None
    """
    if ensemble.kind is not EnsembleKind.BERNOULLI:
        return None
    groups = 2 ** (step * ensemble.dim)
    grouped = values.reshape((groups, values.shape[0] // groups) + values.shape[1:])
    spread = np.abs(grouped - grouped[:, :1])
    return bool(np.all(spread <= atol))
