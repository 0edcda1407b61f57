"""
错误处理和用户友好提示
提供详细的错误信息和解决方案
"""

from functools import wraps
from typing import Dict, List, Optional, Sequence

import numpy as np


class ErrorCode:
    """错误代码定义"""
    # 网格与分区
    GRID_INVALID = "E101"
    PARTITION_TOO_FINE = "E102"

    # 问题定义与假设检验
    PROBLEM_INVALID = "E201"
    EXPONENT_INVALID = "E202"
    MODE_EXPONENT_MISMATCH = "E203"
    ZETA_IN_ADAPTED_MODE = "E204"
    HYPOTHESIS_FAILED = "E205"

    # 表达式 DSL
    EXPR_SYNTAX = "E301"
    EXPR_VARIABLE = "E302"
    EXPR_UNBOUND = "E303"
    EXPR_DIVISION = "E304"

    # 随机模块
    ESTIMATOR_KIND = "E401"
    ESTIMATOR_FAILED = "E402"
    ENUMERATION_BOUND = "E403"

    # 求解器
    ORDERING_VIOLATION = "E501"
    NOT_ADAPTED = "E502"
    NON_CONVERGENCE = "E503"

    # 真值与用例目录
    UNKNOWN_CASE = "E601"
    NO_CLOSED_FORM = "E602"

    # 配置与文件
    CONFIG_ERROR = "E701"
    FILE_NOT_FOUND = "E702"

    # 资源
    MEMORY_ERROR = "E801"


class ErrorSolution:
    """错误解决方案"""

    SOLUTIONS = {
        ErrorCode.GRID_INVALID: {
            "title": "时间网格无效",
            "message": "时间区间长度与步数必须为正",
            "solutions": [
                "检查 T > 0",
                "检查步数 N ≥ 1",
            ],
            "doc_link": "docs/使用说明.md#配置项"
        },

        ErrorCode.PARTITION_TOO_FINE: {
            "title": "分区过细",
            "message": "压缩规则给出的子区间长度小于一个网格步长",
            "solutions": [
                "减小 Lipschitz 常数或放宽 kappa_target",
                "加密时间网格（增大 N）",
                "关闭 strict_partition，按一个步长截断",
            ],
            "doc_link": None
        },

        ErrorCode.PROBLEM_INVALID: {
            "title": "问题定义无效",
            "message": "问题文件缺少必需字段或字段取值非法",
            "solutions": [
                "对照 docs/表达式语法.md 检查问题文件",
                "确认 m、d、T 为正",
            ],
            "doc_link": "docs/表达式语法.md"
        },

        ErrorCode.EXPONENT_INVALID: {
            "title": "指数 p 无效",
            "message": "要求 p > 1",
            "solutions": [
                "把 p 设为大于 1 的实数",
            ],
            "doc_link": None
        },

        ErrorCode.MODE_EXPONENT_MISMATCH: {
            "title": "模式与指数不匹配",
            "message": "M-解模式只接受 1 < p ≤ 2",
            "solutions": [
                "把 p 改到 (1, 2] 内",
                "若生成元不依赖 zeta，改用 adapted 模式",
            ],
            "doc_link": None
        },

        ErrorCode.ZETA_IN_ADAPTED_MODE: {
            "title": "adapted 模式下出现 zeta",
            "message": "简单 BSVIE 的生成元不能依赖 Z(s,t)",
            "solutions": [
                "删除生成元中的 zeta_k_l 变量",
                "或改用 m-solution 模式",
            ],
            "doc_link": None
        },

        ErrorCode.HYPOTHESIS_FAILED: {
            "title": "假设条件不满足",
            "message": "Lipschitz 系数的可积性条件未通过数值检验",
            "solutions": [
                "检查 lipschitz_l1/l2/l3 表达式",
                "确认 epsilon > 0",
            ],
            "doc_link": None
        },

        ErrorCode.EXPR_SYNTAX: {
            "title": "表达式语法错误",
            "message": "表达式无法按语法解析",
            "solutions": [
                "检查括号是否配对",
                "乘方的指数必须是非负整数字面量",
            ],
            "doc_link": "docs/表达式语法.md"
        },

        ErrorCode.EXPR_VARIABLE: {
            "title": "变量不合法",
            "message": "变量不属于当前上下文或下标越界",
            "solutions": [
                "终端条件只能使用 t 与 x_l",
                "下标从 0 开始，且小于 m 或 d",
            ],
            "doc_link": "docs/表达式语法.md"
        },

        ErrorCode.EXPR_UNBOUND: {
            "title": "变量未绑定",
            "message": "求值时缺少变量取值",
            "solutions": [
                "检查求值绑定是否包含全部自由变量",
            ],
            "doc_link": None
        },

        ErrorCode.EXPR_DIVISION: {
            "title": "除以零",
            "message": "表达式求值时分母为零",
            "solutions": [
                "改写表达式避免分母为零",
                "用 sqrt_abs、max 等全函数保证有界",
            ],
            "doc_link": None
        },

        ErrorCode.ESTIMATOR_KIND: {
            "title": "条件期望估计器不适用",
            "message": "精确前缀估计器只接受枚举的 Bernoulli 路径集",
            "solutions": [
                "使用 --estimator exact 时路径集会自动枚举",
                "大规模问题请用 regress:<deg>",
            ],
            "doc_link": None
        },

        ErrorCode.ESTIMATOR_FAILED: {
            "title": "回归失败",
            "message": "最小二乘回归无法求解",
            "solutions": [
                "增加路径数 M",
                "降低回归次数",
            ],
            "doc_link": None
        },

        ErrorCode.ENUMERATION_BOUND: {
            "title": "枚举规模超限",
            "message": "N·d 超过枚举上限",
            "solutions": [
                "减小 N 或 d",
                "改用高斯路径集与回归估计器",
            ],
            "doc_link": None
        },

        ErrorCode.ORDERING_VIOLATION: {
            "title": "计算顺序错误",
            "message": "读取了尚未计算的 Z 块",
            "solutions": [
                "这是驱动顺序缺陷，请附日志提交问题",
            ],
            "doc_link": None
        },

        ErrorCode.NOT_ADAPTED: {
            "title": "适应性检验失败",
            "message": "结果不是关于当前信息流可测的",
            "solutions": [
                "检查估计器实现",
            ],
            "doc_link": None
        },

        ErrorCode.NON_CONVERGENCE: {
            "title": "Picard 迭代不收敛",
            "message": "达到最大迭代次数仍未满足容差",
            "solutions": [
                "增大 max_iter 或放宽 tol",
                "减小 kappa_target 使子区间更短",
                "查看报告中的压缩因子历史",
            ],
            "doc_link": None
        },

        ErrorCode.UNKNOWN_CASE: {
            "title": "未知用例",
            "message": "用例目录中没有该名称",
            "solutions": [
                "运行 python main.py list 查看可用用例",
            ],
            "doc_link": None
        },

        ErrorCode.NO_CLOSED_FORM: {
            "title": "无解析解",
            "message": "该用例没有闭式解，只能与树形求解器比较",
            "solutions": [
                "改用 exact_tree_solve 作为参照",
            ],
            "doc_link": None
        },

        ErrorCode.CONFIG_ERROR: {
            "title": "配置错误",
            "message": "配置文件读取、解析或取值检查失败",
            "solutions": [
                "检查配置文件格式",
                "对照 config.yaml 中的默认值",
            ],
            "doc_link": "docs/使用说明.md#配置项"
        },

        ErrorCode.FILE_NOT_FOUND: {
            "title": "文件未找到",
            "message": "指定的配置或问题文件不存在",
            "solutions": [
                "检查文件路径是否正确",
            ],
            "doc_link": None
        },

        ErrorCode.MEMORY_ERROR: {
            "title": "内存不足",
            "message": "Z 曲面所需内存超过系统可用内存",
            "solutions": [
                "减少路径数 M 或步数 N",
                "关闭其他占用内存的程序",
            ],
            "doc_link": None
        },
    }

    @classmethod
    def get_solution(cls, error_code: str) -> Optional[Dict]:
        """获取错误解决方案"""
        return cls.SOLUTIONS.get(error_code)

    @classmethod
    def format_error_message(cls, error_code: str, detail: str = "") -> str:
        """格式化错误消息"""
        solution = cls.get_solution(error_code)
        if not solution:
            return f"错误代码: {error_code}\n{detail}"

        message = f"[{error_code}] {solution['title']}: {solution['message']}\n"

        if detail:
            message += f"详细信息: {detail}\n"

        message += "解决方案:\n"
        for i, sol in enumerate(solution['solutions'], 1):
            message += f"  {i}. {sol}\n"

        if solution['doc_link']:
            message += f"查看文档: {solution['doc_link']}"

        return message.rstrip()


class BSVIEError(Exception):
    """用户友好的错误基类"""

    default_code = ErrorCode.PROBLEM_INVALID

    def __init__(self, detail: str = "", error_code: Optional[str] = None,
                 original_error: Optional[BaseException] = None):
        self.error_code = error_code or self.default_code
        self.detail = detail
        self.original_error = original_error
        self.message = ErrorSolution.format_error_message(self.error_code, detail)
        super().__init__(self.message)

    def get_short_message(self) -> str:
        """获取简短错误消息"""
        solution = ErrorSolution.get_solution(self.error_code)
        if solution:
            text = f"[{self.error_code}] {solution['title']}"
            return f"{text}: {self.detail}" if self.detail else text
        return self.detail or "未知错误"

    def get_solutions(self) -> List[str]:
        """获取解决方案列表"""
        solution = ErrorSolution.get_solution(self.error_code)
        return solution['solutions'] if solution else []


class GridError(BSVIEError):
    default_code = ErrorCode.GRID_INVALID


class PartitionError(BSVIEError):
    default_code = ErrorCode.PARTITION_TOO_FINE


class ValidationError(BSVIEError):
    default_code = ErrorCode.PROBLEM_INVALID


class ExpressionError(BSVIEError):
    """表达式错误，语法错误时带字符位置"""

    default_code = ErrorCode.EXPR_SYNTAX

    def __init__(self, detail: str = "", error_code: Optional[str] = None,
                 position: Optional[int] = None):
        self.position = position
        if position is not None:
            detail = f"{detail} (位置 {position})"
        super().__init__(detail, error_code)


class EstimatorError(BSVIEError):
    default_code = ErrorCode.ESTIMATOR_FAILED


class EnumerationBoundError(BSVIEError):
    default_code = ErrorCode.ENUMERATION_BOUND


class OrderingError(BSVIEError):
    default_code = ErrorCode.ORDERING_VIOLATION


class AdaptednessError(BSVIEError):
    default_code = ErrorCode.NOT_ADAPTED


class ConvergenceError(BSVIEError):
    """不收敛错误，附带压缩因子历史"""

    default_code = ErrorCode.NON_CONVERGENCE

    def __init__(self, detail: str = "", ratios: Sequence[float] = (),
                 distances: Sequence[float] = ()):
        self.ratios = list(ratios)
        self.distances = list(distances)
        if self.ratios:
            tail = ", ".join(f"{r:.3g}" for r in self.ratios[-5:])
            detail = f"{detail}; 最近压缩因子: [{tail}]"
        super().__init__(detail)


class CatalogError(BSVIEError):
    default_code = ErrorCode.UNKNOWN_CASE


class ConfigError(BSVIEError):
    default_code = ErrorCode.CONFIG_ERROR


def exit_code_for(error: BaseException) -> int:
    """把异常映射为命令行退出码"""
    if isinstance(error, ConvergenceError):
        return 2
    return 1


def handle_exception(func):
    """异常处理装饰器"""
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except BSVIEError:
            raise
        except FileNotFoundError as e:
            raise BSVIEError(str(e), ErrorCode.FILE_NOT_FOUND, e)
        except MemoryError as e:
            raise BSVIEError(str(e), ErrorCode.MEMORY_ERROR, e)
        except np.linalg.LinAlgError as e:
            raise EstimatorError(str(e), original_error=e)
        except FloatingPointError as e:
            raise BSVIEError(str(e), ErrorCode.EXPR_DIVISION, e)

    return wrapper
