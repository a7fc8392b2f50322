"""
模拟配置模块

SimConfig 是一次模拟运行的全部输入（单个 JSON 文档），相同的 SimConfig
产生字节级相同的 trace。它从不读取环境变量。

JSON 格式:
    {
        "n": 5, "f": 2, "seed": 42,
        "latency": "planet",            # 或 "uniform(50)"、"two-region"、n×n 矩阵
        "jitter": 5,
        "crashes": [{"proc": 3, "at": 1000}],
        "workload": {"clientsPerProcess": 1, "commandsPerClient": 20,
                     "conflictRate": 0.1, "readRatio": 0.0, "payloadBytes": 16},
        "recoveryTimeout": 5000,
        "horizon": 600000,
        "flags": {"slowPathPruning": false, "nfrReads": false, "conflictMode": "read-aware"},
        "forceCrashes": false,
        "script": [{"at": 0, "proc": 1, "op": "put", "key": "x", "value": "1"}]
    }
"""

import json
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

from .core import CONFLICT_MODES, CONFLICT_READ_AWARE
from .protocol import ProtocolConfig


class ConfigError(ValueError):
    """
    配置校验失败。

    Attributes:
        field: 第一个出错的字段
        problems: 所有 (字段, 说明)
    """

    def __init__(self, field_name: str, message: str, problems: Optional[List[Tuple[str, str]]] = None):
        self.field = field_name
        self.problems = problems or [(field_name, message)]
        details = '; '.join(f"{name}: {msg}" for name, msg in self.problems)
        super().__init__(f"配置错误 ({len(self.problems)} 处) - {details}")


# ============ 延迟预设 ============

# 5 个站点之间的单向延迟（虚拟毫秒，合成数据）
PLANET_SITES = [
    [0, 40, 70, 110, 150],
    [40, 0, 60, 90, 130],
    [70, 60, 0, 80, 120],
    [110, 90, 80, 0, 100],
    [150, 130, 120, 100, 0],
]
# 同站点不同进程之间的延迟
SAME_SITE_DELAY = 1

TWO_REGION_LOCAL = 10
TWO_REGION_REMOTE = 80

_UNIFORM_RE = re.compile(r'^uniform\((\d+)\)$')


def latency_preset(name: str, n: int) -> List[List[int]]:
    """
    生成 n×n 延迟矩阵。

    Args:
        name: "uniform(<ms>)"、"two-region" 或 "planet"
        n: 进程数

    Raises:
        ValueError: 未知预设或 uniform 延迟小于 1 ms

    Example:
        >>> latency_preset('uniform(10)', 3)
        [[0, 10, 10], [10, 0, 10], [10, 10, 0]]
    """
    match = _UNIFORM_RE.match(name)
    if match:
        ms = int(match.group(1))
        if ms < 1:
            raise ValueError(f"uniform 延迟至少为 1 ms: {name}")
        return [[0 if i == j else ms for j in range(n)] for i in range(n)]
    if name == 'two-region':
        half = (n + 1) // 2
        region = [0 if i < half else 1 for i in range(n)]
        return [[0 if i == j else (TWO_REGION_LOCAL if region[i] == region[j] else TWO_REGION_REMOTE)
                 for j in range(n)] for i in range(n)]
    if name == 'planet':
        site = [i % len(PLANET_SITES) for i in range(n)]
        return [[0 if i == j else (PLANET_SITES[site[i]][site[j]] or SAME_SITE_DELAY)
                 for j in range(n)] for i in range(n)]
    raise ValueError(f"未知的延迟预设: {name!r}（可选 uniform(<ms>)、two-region、planet）")


# ============ 配置对象 ============

@dataclass(frozen=True)
class WorkloadConfig:
    """闭环客户端负载。"""

    clients_per_process: int = 1
    commands_per_client: int = 10
    conflict_rate: float = 0.0
    read_ratio: float = 0.0
    payload_bytes: int = 16

    def to_dict(self) -> Dict[str, Any]:
        return {
            'clientsPerProcess': self.clients_per_process,
            'commandsPerClient': self.commands_per_client,
            'conflictRate': self.conflict_rate,
            'readRatio': self.read_ratio,
            'payloadBytes': self.payload_bytes,
        }


@dataclass(frozen=True)
class ScriptedSubmission:
    """在指定虚拟时间注入的一次提交。"""

    at: int
    proc: int
    op: str
    key: str
    value: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {'at': self.at, 'proc': self.proc, 'op': self.op, 'key': self.key}
        if self.value is not None:
            data['value'] = self.value
        return data


@dataclass(frozen=True)
class SimConfig:
    """
    一次模拟运行的完整配置。

    Attributes:
        n, f: 集群规模与容错上限
        seed: 随机种子
        latency: n×n 基础单向延迟（虚拟毫秒）
        latency_name: 预设名（矩阵直接给出时为 None）
        jitter: 每条消息额外的均匀抖动上界
        crashes: (进程, 虚拟时间)
        workload: 客户端负载
        recovery_timeout: 恢复超时（虚拟毫秒）
        horizon: 模拟时间上限
        protocol: 协议开关
        force_crashes: 允许崩溃数超过 f（只用于安全性测试）
        script: 脚本化提交
    """

    n: int = 3
    f: int = 1
    seed: int = 0
    latency: Tuple[Tuple[int, ...], ...] = ()
    latency_name: Optional[str] = 'uniform(50)'
    jitter: int = 0
    crashes: Tuple[Tuple[int, int], ...] = ()
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    recovery_timeout: int = 5000
    horizon: int = 600000
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    force_crashes: bool = False
    script: Tuple[ScriptedSubmission, ...] = ()

    def __post_init__(self):
        if not self.latency and self.latency_name:
            matrix = latency_preset(self.latency_name, self.n)
            object.__setattr__(self, 'latency', tuple(tuple(row) for row in matrix))

    def with_seed(self, seed: int) -> 'SimConfig':
        return _replace(self, seed=seed)

    def to_dict(self) -> Dict[str, Any]:
        """带全部默认值的 JSON 文档（字段顺序固定）。"""
        return {
            'n': self.n,
            'f': self.f,
            'seed': self.seed,
            'latency': self.latency_name if self.latency_name else [list(row) for row in self.latency],
            'jitter': self.jitter,
            'crashes': [{'proc': p, 'at': t} for p, t in self.crashes],
            'workload': self.workload.to_dict(),
            'recoveryTimeout': self.recovery_timeout,
            'horizon': self.horizon,
            'flags': {
                'slowPathPruning': self.protocol.slow_path_pruning,
                'nfrReads': self.protocol.nfr_reads,
                'conflictMode': self.protocol.conflict_mode,
            },
            'forceCrashes': self.force_crashes,
            'script': [s.to_dict() for s in self.script],
        }

    @property
    def mean_delay(self) -> float:
        """非对角线基础延迟的平均值（一个"消息延迟"单位）。"""
        values = [self.latency[i][j] for i in range(self.n) for j in range(self.n) if i != j]
        return sum(values) / len(values) if values else 1.0


def _replace(config: SimConfig, **changes) -> SimConfig:
    doc = config.to_dict()
    for key, value in changes.items():
        doc[key] = value
    return sim_config_from_dict(doc)


# ============ 解析与校验 ============

_TOP_KEYS = {'n', 'f', 'seed', 'latency', 'jitter', 'crashes', 'workload', 'recoveryTimeout',
             'horizon', 'flags', 'forceCrashes', 'script'}


class _Collector:
    def __init__(self):
        self.problems: List[Tuple[str, str]] = []

    def add(self, name: str, message: str) -> None:
        self.problems.append((name, message))

    def integer(self, doc: Dict, key: str, default: int, name: str, minimum: Optional[int] = None) -> int:
        value = doc.get(key, default)
        if isinstance(value, bool) or not isinstance(value, int):
            self.add(name, f"应为整数，得到 {value!r}")
            return default
        if minimum is not None and value < minimum:
            self.add(name, f"应 ≥ {minimum}，得到 {value}")
            return default
        return value

    def ratio(self, doc: Dict, key: str, default: float, name: str) -> float:
        value = doc.get(key, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.add(name, f"应为数值，得到 {value!r}")
            return default
        if not 0.0 <= value <= 1.0:
            self.add(name, f"应在 [0, 1] 内，得到 {value}")
            return default
        return float(value)

    def boolean(self, doc: Dict, key: str, default: bool, name: str) -> bool:
        value = doc.get(key, default)
        if not isinstance(value, bool):
            self.add(name, f"应为 true/false，得到 {value!r}")
            return default
        return value


def sim_config_from_dict(doc: Dict[str, Any]) -> SimConfig:
    """
    从 JSON 文档构造并校验 SimConfig。缺省字段取默认值。

    Raises:
        ConfigError: 任意字段不合法（problems 列出全部问题）
    """
    if not isinstance(doc, dict):
        raise ConfigError('<root>', f"配置应为 JSON 对象，得到 {type(doc).__name__}")
    c = _Collector()
    for key in sorted(set(doc) - _TOP_KEYS):
        c.add(key, "未知字段")

    n = c.integer(doc, 'n', 3, 'n', minimum=3)
    f = c.integer(doc, 'f', 1, 'f', minimum=1)
    if f > (n - 1) // 2:
        c.add('f', f"需满足 1 ≤ f ≤ ⌊(n−1)/2⌋ = {(n - 1) // 2}，得到 f={f}")
    seed = c.integer(doc, 'seed', 0, 'seed', minimum=0)
    jitter = c.integer(doc, 'jitter', 0, 'jitter', minimum=0)
    recovery_timeout = c.integer(doc, 'recoveryTimeout', 5000, 'recoveryTimeout', minimum=1)
    horizon = c.integer(doc, 'horizon', 600000, 'horizon', minimum=1)
    force_crashes = c.boolean(doc, 'forceCrashes', False, 'forceCrashes')

    # 延迟
    raw_latency = doc.get('latency', 'uniform(50)')
    latency_name: Optional[str] = None
    matrix: List[List[int]] = []
    if isinstance(raw_latency, str):
        latency_name = raw_latency
        try:
            matrix = latency_preset(raw_latency, n)
        except ValueError as e:
            c.add('latency', str(e))
    elif isinstance(raw_latency, list):
        matrix = raw_latency
        if len(matrix) != n or any(not isinstance(row, list) or len(row) != n for row in matrix):
            c.add('latency', f"矩阵应为 {n}×{n}")
            matrix = []
        else:
            for i in range(n):
                for j in range(n):
                    value = matrix[i][j]
                    if isinstance(value, bool) or not isinstance(value, int):
                        c.add(f'latency[{i}][{j}]', f"应为整数，得到 {value!r}")
                    elif i == j and value != 0:
                        c.add(f'latency[{i}][{j}]', "对角线必须为 0")
                    elif i != j and value <= 0:
                        c.add(f'latency[{i}][{j}]', "非对角线延迟必须 > 0")
    else:
        c.add('latency', f"应为预设名或矩阵，得到 {raw_latency!r}")

    # 崩溃
    crashes: List[Tuple[int, int]] = []
    raw_crashes = doc.get('crashes', [])
    if not isinstance(raw_crashes, list):
        c.add('crashes', "应为列表")
        raw_crashes = []
    for idx, item in enumerate(raw_crashes):
        name = f'crashes[{idx}]'
        if not isinstance(item, dict):
            c.add(name, "应为 {proc, at} 对象")
            continue
        proc = c.integer(item, 'proc', 0, f'{name}.proc', minimum=1)
        at = c.integer(item, 'at', 0, f'{name}.at', minimum=0)
        if proc > n:
            c.add(f'{name}.proc', f"进程编号应在 1..{n} 内，得到 {proc}")
        elif proc >= 1:
            crashes.append((proc, at))
    crashed_procs = {p for p, _ in crashes}
    if len(crashed_procs) != len(crashes):
        c.add('crashes', "同一进程不能崩溃两次")
    if len(crashed_procs) > f and not force_crashes:
        c.add('crashes', f"崩溃进程数 {len(crashed_procs)} 超过 f={f}（测试时可用 forceCrashes）")

    # 负载
    raw_workload = doc.get('workload', {})
    if not isinstance(raw_workload, dict):
        c.add('workload', "应为对象")
        raw_workload = {}
    workload = WorkloadConfig(
        clients_per_process=c.integer(raw_workload, 'clientsPerProcess', 1, 'workload.clientsPerProcess', minimum=0),
        commands_per_client=c.integer(raw_workload, 'commandsPerClient', 10, 'workload.commandsPerClient', minimum=0),
        conflict_rate=c.ratio(raw_workload, 'conflictRate', 0.0, 'workload.conflictRate'),
        read_ratio=c.ratio(raw_workload, 'readRatio', 0.0, 'workload.readRatio'),
        payload_bytes=c.integer(raw_workload, 'payloadBytes', 16, 'workload.payloadBytes', minimum=0),
    )

    # 协议开关
    raw_flags = doc.get('flags', {})
    if not isinstance(raw_flags, dict):
        c.add('flags', "应为对象")
        raw_flags = {}
    conflict_mode = raw_flags.get('conflictMode', CONFLICT_READ_AWARE)
    if conflict_mode not in CONFLICT_MODES:
        c.add('flags.conflictMode', f"应为 {' 或 '.join(CONFLICT_MODES)}，得到 {conflict_mode!r}")
        conflict_mode = CONFLICT_READ_AWARE
    protocol = ProtocolConfig(
        slow_path_pruning=c.boolean(raw_flags, 'slowPathPruning', False, 'flags.slowPathPruning'),
        nfr_reads=c.boolean(raw_flags, 'nfrReads', False, 'flags.nfrReads'),
        conflict_mode=conflict_mode,
    )

    # 脚本
    script: List[ScriptedSubmission] = []
    raw_script = doc.get('script', [])
    if not isinstance(raw_script, list):
        c.add('script', "应为列表")
        raw_script = []
    for idx, item in enumerate(raw_script):
        name = f'script[{idx}]'
        if not isinstance(item, dict):
            c.add(name, "应为 {at, proc, op, key, value} 对象")
            continue
        at = c.integer(item, 'at', 0, f'{name}.at', minimum=0)
        proc = c.integer(item, 'proc', 1, f'{name}.proc', minimum=1)
        if proc > n:
            c.add(f'{name}.proc', f"进程编号应在 1..{n} 内，得到 {proc}")
        op = item.get('op')
        key = item.get('key')
        value = item.get('value')
        if op not in ('get', 'put'):
            c.add(f'{name}.op', f"应为 get 或 put，得到 {op!r}")
        if not isinstance(key, str):
            c.add(f'{name}.key', f"应为字符串，得到 {key!r}")
        if op == 'put' and not isinstance(value, str):
            c.add(f'{name}.value', f"put 需要字符串 value，得到 {value!r}")
        script.append(ScriptedSubmission(at, proc, op, key, value if op == 'put' else None))

    if c.problems:
        first_name, first_message = c.problems[0]
        raise ConfigError(first_name, first_message, c.problems)

    return SimConfig(
        n=n,
        f=f,
        seed=seed,
        latency=tuple(tuple(row) for row in matrix),
        latency_name=latency_name,
        jitter=jitter,
        crashes=tuple(sorted(crashes, key=lambda x: (x[1], x[0]))),
        workload=workload,
        recovery_timeout=recovery_timeout,
        horizon=horizon,
        protocol=protocol,
        force_crashes=force_crashes,
        script=tuple(script),
    )


def load_sim_config(path: str, overrides: Optional[Dict[str, Any]] = None) -> SimConfig:
    """
    从 JSON 文件读取 SimConfig。

    Args:
        path: JSON 文件路径
        overrides: 覆盖顶层字段（如命令行的 seed、horizon）

    Raises:
        ConfigError: 文件不存在、不是合法 JSON 或字段不合法
    """
    try:
        with open(path, 'r', encoding='utf-8') as fp:
            doc = json.load(fp)
    except FileNotFoundError:
        raise ConfigError('<file>', f"配置文件不存在: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError('<file>', f"{path} 不是合法的 JSON (第 {e.lineno} 行): {e.msg}")
    if overrides and isinstance(doc, dict):
        doc.update(overrides)
    return sim_config_from_dict(doc)
