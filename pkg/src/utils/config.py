"""
配置管理模块
负责加载、保存和管理求解运行配置
"""

import copy
import json
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from dsl.flatfile import read_flat, write_flat
from utils.error_handler import ConfigError, ErrorCode
from utils.logger import get_logger


logger = get_logger("config")


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """把 override 递归合并到 base 的副本上"""
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _nest_flat(flat: Dict[str, str]) -> Dict[str, Any]:
    """把扁平键（a.b = v）展开为嵌套字典，不带点的键归入 problem 段"""
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        keys = key.split('.') if '.' in key else ["problem", key]
        node = nested
        for part in keys[:-1]:
            node = node.setdefault(part, {})
        node[keys[-1]] = _coerce(value)
    return nested


def _coerce(text: str) -> Any:
    """扁平文件中的取值转换为数值、布尔或列表，其余保持字符串"""
    if not isinstance(text, str):
        return text
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    if text.startswith('['):
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError:
            return text
        if isinstance(value, list):
            return [_coerce(str(v)) for v in value]
    return text


class Config:
    """配置管理器"""

    DEFAULT_CONFIG = {
        # 问题定义（可直接写在扁平文件中，也可指向问题文件）
        "problem": {
            "file": None,
            "case": None,
            "mode": None,
            "p": None,
        },

        # 路径集设置
        "ensemble": {
            "kind": "gaussian",  # gaussian, bernoulli
            "paths": 10000,
            "grid": 8,
            "seed": 7,
        },

        # 求解器设置
        "solver": {
            "estimator": "regress:3",  # exact, regress:<deg>
            "tol": 1e-8,
            "max_iter": 50,
            "kappa_target": 0.5,
            "c_cal": 8.0,
            "strict_partition": False,
            "initial": "zero",  # zero, terminal
            "halving_limit": 8,
        },

        # 运行时设置
        "runtime": {
            "workers": 1,
            "memory_check": True,
        },

        # 输出设置
        "output": {
            "folder": "output",
            "quantiles": [0.05, 0.5, 0.95],
            "include_timing": False,
            "per_path_dump": False,
        },

        # 日志设置
        "logging": {
            "level": "INFO",
            "folder": "logs",
            "to_file": False,
        },
    }

    def __init__(self, config_file: Optional[str] = None):
        """
        初始化配置管理器

        Args:
            config_file: 配置文件路径（None 时只使用默认配置）
        """
        self.config_file = Path(config_file) if config_file else None
        self.config: Dict[str, Any] = copy.deepcopy(self.DEFAULT_CONFIG)

    def load(self) -> "Config":
        """加载配置并合并到默认值上"""
        if self.config_file is None:
            logger.info("未指定配置文件，使用默认配置")
            return self
        if not self.config_file.exists():
            raise ConfigError(str(self.config_file), ErrorCode.FILE_NOT_FOUND)

        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                text = f.read()
            suffix = self.config_file.suffix.lower()
            if suffix in ('.yaml', '.yml'):
                loaded = yaml.safe_load(text) or {}
            elif suffix == '.json':
                loaded = json.loads(text)
            else:
                loaded = _nest_flat(read_flat(text))
        except (yaml.YAMLError, json.JSONDecodeError) as e:
            raise ConfigError(f"{self.config_file}: {e}", original_error=e)

        if not isinstance(loaded, dict):
            raise ConfigError(f"{self.config_file}: 顶层必须是映射")

        self.config = _deep_merge(self.DEFAULT_CONFIG, loaded)
        logger.info(f"配置已加载: {self.config_file}")
        return self

    def save(self, path: Optional[str] = None):
        """保存配置"""
        target = Path(path) if path else self.config_file
        if target is None:
            raise ConfigError("没有可写入的配置文件路径")
        target.parent.mkdir(parents=True, exist_ok=True)

        suffix = target.suffix.lower()
        with open(target, 'w', encoding='utf-8') as f:
            if suffix in ('.yaml', '.yml'):
                yaml.safe_dump(self.config, f, allow_unicode=True, default_flow_style=False)
            elif suffix == '.json':
                json.dump(self.config, f, ensure_ascii=False, indent=2)
            else:
                f.write(write_flat(self.flatten()))
        logger.info(f"配置已保存: {target}")

    def flatten(self) -> Dict[str, Any]:
        """展开为扁平键值（problem 段的键不加前缀）"""
        flat: Dict[str, Any] = {}

        def walk(prefix: str, node: Dict[str, Any]):
            for key, value in node.items():
                dotted = f"{prefix}.{key}" if prefix else key
                if isinstance(value, dict):
                    walk(dotted, value)
                elif value is not None:
                    flat[dotted] = value

        for section, values in self.config.items():
            if isinstance(values, dict):
                walk("" if section == "problem" else section, values)
        return flat

    def get(self, key_path: str, default: Any = None) -> Any:
        """
        获取配置值

        Args:
            key_path: 配置键路径，使用.分隔，如 "solver.tol"
            default: 默认值

        Returns:
            配置值
        """
        value = self.config
        for key in key_path.split('.'):
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default
        return value

    def set(self, key_path: str, value: Any):
        """设置配置值"""
        keys = key_path.split('.')
        config = self.config
        for key in keys[:-1]:
            config = config.setdefault(key, {})
        config[keys[-1]] = value

    def section(self, name: str) -> Dict[str, Any]:
        """获取整个配置段（副本）"""
        return copy.deepcopy(self.config.get(name, {}))


def load_config(config_file: Optional[str] = None) -> Config:
    """加载配置文件"""
    return Config(config_file).load()
