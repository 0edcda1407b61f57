"""
工作线程池
用于并行处理外层时间指标、路径块等相互独立的任务
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, List, Optional

from utils.logger import LoggerMixin


class WorkerPool(LoggerMixin):
    """有序映射的线程池，结果顺序与输入顺序一致"""

    def __init__(self, max_workers: int = 1):
        """
        初始化线程池

        Args:
            max_workers: 最大并行数，1 表示在调用线程中顺序执行
        """
        super().__init__()
        self.max_workers = max(1, int(max_workers))
        self.executor: Optional[ThreadPoolExecutor] = None
        if self.max_workers > 1:
            self.executor = ThreadPoolExecutor(max_workers=self.max_workers)
            self.logger.debug(f"使用线程池，最大并行数: {self.max_workers}")

    def map_ordered(self, func: Callable[[Any], Any], items: Iterable[Any]) -> List[Any]:
        """
        映射任务到多个项目，按输入顺序返回结果

        任务异常会在收集时原样抛出。

        Args:
            func: 要执行的函数
            items: 要处理的项目

        Returns:
            结果列表
        """
        items = list(items)
        if self.executor is None or len(items) <= 1:
            return [func(item) for item in items]
        futures = [self.executor.submit(func, item) for item in items]
        return [future.result() for future in futures]

    def shutdown(self, wait: bool = True):
        """关闭线程池"""
        if self.executor is not None:
            self.executor.shutdown(wait=wait)
            self.executor = None
            self.logger.debug("线程池已关闭")

    def __enter__(self):
        """上下文管理器入口"""
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        """上下文管理器出口"""
        self.shutdown(wait=True)


# 全局线程池实例
_global_pool: Optional[WorkerPool] = None


def get_worker_pool(max_workers: Optional[int] = None) -> WorkerPool:
    """
    获取全局线程池

    Args:
        max_workers: 最大并行数；与现有实例不同时重建，None 沿用现有实例
    """
    global _global_pool
    if _global_pool is None:
        _global_pool = WorkerPool(max_workers or 1)
    elif max_workers is not None and max(1, int(max_workers)) != _global_pool.max_workers:
        _global_pool.shutdown()
        _global_pool = WorkerPool(max_workers)
    return _global_pool


def shutdown_global_pool():
    """关闭全局线程池"""
    global _global_pool
    if _global_pool is not None:
        _global_pool.shutdown()
        _global_pool = None
