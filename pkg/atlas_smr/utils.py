"""
工具函数模块

提供通用的工具函数：
- 虚拟时间上的指数退避
- CSV 导出（扫参结果表）
- 快照序列化/反序列化（dill）
"""

import csv
import json
import os
from typing import Any, Dict, List, Optional

import dill


# ============ 退避 ============

def backoff_delay(
    attempt: int,
    initial_delay: int,
    max_delay: int,
    backoff_factor: int = 2
) -> int:
    """
    第 attempt 次重试前的等待时间（虚拟毫秒）。

    Args:
        attempt: 重试次数（0 表示第一次）
        initial_delay: 初始延迟
        max_delay: 延迟上限
        backoff_factor: 退避因子（每次重试延迟乘以这个因子）

    Returns:
        min(initial_delay · factor^attempt, max_delay)

    Example:
        >>> [backoff_delay(i, 100, 500) for i in range(4)]
        [100, 200, 400, 500]
    """
    if attempt < 0:
        raise ValueError(f"attempt 不能为负数: {attempt}")
    delay = initial_delay
    for _ in range(attempt):
        delay *= backoff_factor
        if delay >= max_delay:
            return max_delay
    return min(delay, max_delay)


# ============ CSV 导出 ============

def _clean_value(value: Any) -> str:
    """
    清理字段值，确保是字符串且没有 None。
    """
    if value is None:
        return ''
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (dict, list)):
        return json.dumps(value, ensure_ascii=False)
    return str(value)


def to_csv(
    rows: List[Dict],
    fpath: str,
    fields: List[str],
    encoding: str = 'utf-8-sig',
    verbose: bool = True
) -> None:
    """
    将结果行写入 CSV 文件（覆盖写）。

    Args:
        rows: 字典列表
        fpath: 输出 CSV 文件路径
        fields: 列顺序
        encoding: 文件编码（默认带 BOM，Excel 友好）
        verbose: 是否打印日志
    """
    os.makedirs(os.path.dirname(fpath) or '.', exist_ok=True)
    with open(fpath, 'w', encoding=encoding, newline='') as fp:
        writer = csv.DictWriter(
            fp,
            fieldnames=fields,
            quoting=csv.QUOTE_MINIMAL,
            doublequote=True,
            lineterminator='\n'
        )
        writer.writeheader()
        for row in rows:
            writer.writerow({field: _clean_value(row.get(field)) for field in fields})
    if verbose:
        print(f"✅ CSV 文件已保存: {fpath} ({len(rows)} 行)")


# ============ 快照 ============

def save_snapshot(obj: Any, fpath: str, verbose: bool = True) -> None:
    """
    将模拟结束时的状态保存为 PKL 文件。

    Args:
        obj: 任意 Python 对象
        fpath: 输出文件路径
    """
    os.makedirs(os.path.dirname(fpath) or '.', exist_ok=True)
    with open(fpath, 'wb') as fp:
        dill.dump(obj, fp)
    if verbose:
        print(f"✅ 快照已保存: {fpath}")


def load_snapshot(fpath: str) -> Optional[Any]:
    """
    从 PKL 文件加载快照。

    Returns:
        加载的对象；文件不存在时返回 None
    """
    if not os.path.exists(fpath):
        print(f"⚠️  快照文件不存在: {fpath}")
        return None
    with open(fpath, 'rb') as fp:
        return dill.load(fp)
