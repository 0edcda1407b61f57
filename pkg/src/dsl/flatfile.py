"""
扁平 key = value 文件格式

语法:
    # 注释行
    key = value
    key = "带引号的值，可包含 # 和空格"

键可以带点（solver.tol），值可以加双引号；引号内用 \\" 与 \\\\ 转义。
"""

import json
import re
from typing import Any, Dict, Mapping

from utils.error_handler import ConfigError


_KEY_PATTERN = re.compile(r'^[A-Za-z_][A-Za-z0-9_.]*$')


def _parse_quoted(text: str, line_no: int) -> str:
    """解析双引号字符串，返回内容"""
    out = []
    i = 1
    while i < len(text):
        ch = text[i]
        if ch == '\\' and i + 1 < len(text):
            out.append(text[i + 1])
            i += 2
            continue
        if ch == '"':
            rest = text[i + 1:].strip()
            if rest and not rest.startswith('#'):
                raise ConfigError(f"第 {line_no} 行: 引号后存在多余内容 '{rest}'")
            return ''.join(out)
        out.append(ch)
        i += 1
    raise ConfigError(f"第 {line_no} 行: 引号未闭合")


def read_flat(text: str) -> Dict[str, str]:
    """
    读取扁平配置文本

    Args:
        text: 文件内容

    Returns:
        保持书写顺序的键值字典，值均为字符串
    """
    result: Dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigError(f"第 {line_no} 行: 缺少 '='")

        key, value = line.split('=', 1)
        key = key.strip()
        value = value.strip()
        if not _KEY_PATTERN.match(key):
            raise ConfigError(f"第 {line_no} 行: 非法的键 '{key}'")
        if key in result:
            raise ConfigError(f"第 {line_no} 行: 重复的键 '{key}'")

        if value.startswith('"'):
            value = _parse_quoted(value, line_no)
        elif '#' in value:
            value = value.split('#', 1)[0].strip()
        result[key] = value
    return result


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, (list, tuple)):
        return json.dumps(list(value))
    escaped = str(value).replace('\\', '\\\\').replace('"', '\\"')
    return f'"{escaped}"'


def write_flat(mapping: Mapping[str, Any]) -> str:
    """把键值写成扁平文本，字符串一律加引号"""
    return ''.join(f"{key} = {_format_value(value)}\n" for key, value in mapping.items())
