"""
内存监控工具
监控进程内存并在分配大数组前检查系统可用内存
"""

import psutil
from typing import Dict

from utils.error_handler import BSVIEError, ErrorCode
from utils.logger import LoggerMixin


class MemoryMonitor(LoggerMixin):
    """内存监控器"""

    def __init__(self):
        """初始化内存监控器"""
        super().__init__()
        self.process = psutil.Process()

    def get_memory_usage(self) -> Dict[str, float]:
        """
        获取当前内存使用情况

        Returns:
            内存使用信息字典
        """
        try:
            mem_info = self.process.memory_info()
            return {
                'rss_mb': mem_info.rss / (1024 * 1024),  # 实际物理内存
                'vms_mb': mem_info.vms / (1024 * 1024),  # 虚拟内存
                'percent': self.process.memory_percent(),
            }
        except psutil.Error as e:
            self.logger.error(f"获取内存信息失败: {e}")
            return {'rss_mb': 0, 'vms_mb': 0, 'percent': 0}

    def get_available_bytes(self) -> int:
        """系统可用内存（字节）"""
        try:
            return int(psutil.virtual_memory().available)
        except psutil.Error as e:
            self.logger.error(f"获取系统内存信息失败: {e}")
            return 0

    def ensure_allocation(self, nbytes: int, label: str = "数组"):
        """
        检查一次分配是否放得进可用内存

        Args:
            nbytes: 计划分配的字节数
            label: 日志中使用的名称

        Raises:
            BSVIEError: 可用内存不足（E801）
        """
        available = self.get_available_bytes()
        if available and nbytes > available:
            raise BSVIEError(
                f"{label} 需要 {nbytes / 2**20:.1f}MB，可用 {available / 2**20:.1f}MB",
                ErrorCode.MEMORY_ERROR,
            )
        self.logger.debug(f"{label} 预计占用 {nbytes / 2**20:.1f}MB")

    def log_memory_status(self, stage: str = ""):
        """记录当前内存状态到日志"""
        mem = self.get_memory_usage()
        prefix = f"[{stage}] " if stage else ""
        self.logger.info(
            f"{prefix}内存状态 - 进程: {mem['rss_mb']:.1f}MB ({mem['percent']:.1f}%)"
        )


# 全局单例
_global_monitor = None


def get_memory_monitor() -> MemoryMonitor:
    """获取全局内存监控器"""
    global _global_monitor
    if _global_monitor is None:
        _global_monitor = MemoryMonitor()
    return _global_monitor
