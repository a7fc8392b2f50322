"""
ATLAS SMR - 无领导者状态机复制协议的确定性实现与验证工具

包含：
- 协议: 每个进程的 ATLAS 状态机（快速路径、慢速路径、恢复）
- 执行器: 依赖图上的最小批次执行
- 复制键值存储: 基于协议的通用构造
- 模拟器: 带种子的离散事件模拟，支持崩溃注入和恢复定时器
- 检查器: 协议不变式、SMR 规约和线性一致性

Usage:
    from atlas_smr import Simulator, sim_config_from_dict, run_all_checks

    config = sim_config_from_dict({'n': 5, 'f': 2, 'seed': 1,
                                   'workload': {'conflictRate': 0.1}})
    trace = Simulator(config)()
    report = run_all_checks(trace)
    report.print_summary()
"""

__version__ = "0.1.0"
__author__ = "huigu"

# 核心类型
from .core import (
    Dot,
    Command,
    Phase,
    PhaseError,
    NOOP,
    CONFLICT_COARSE,
    CONFLICT_READ_AWARE,
    get,
    put,
    conflict,
    is_read_star,
    ballot_owner,
    next_ballot,
    dot_order,
    MCollect,
    MCollectAck,
    MConsensus,
    MConsensusAck,
    MCommit,
    MRecover,
    MRecoverAck,
    message_to_dict,
    message_from_dict,
)

# 协议
from .protocol import (
    Process,
    ProcessCrashedError,
    ProtocolConfig,
    CommandInfo,
    HandlerOutput,
    fast_path_condition,
    threshold_union,
    matching_replies,
)

# 执行器
from .executor import ExecGraph, ExecutionError

# 键值存储
from .kvs import KvState, ReplicatedKvs, DuplicateInvocationError, apply

# 模拟
from .sim_config import (
    SimConfig,
    WorkloadConfig,
    ConfigError,
    latency_preset,
    sim_config_from_dict,
    load_sim_config,
)
from .simulator import Simulator, run
from .trace import Trace, TraceFormatError, Operation, extract_history

# 检查器
from .checkers import (
    CheckReport,
    CheckResult,
    check_agreement,
    check_conflict_coverage,
    check_smr_spec,
    check_linearizability,
    check_fast_path_recoverability,
    check_ballot_safety,
    check_liveness,
    check_pruning,
    check_matching_oracle,
    run_all_checks,
)
from .linearizability import check_history, SearchBudgetExceeded

# 统计
from .summary import RunSummary, summarize, sweep

# 工具函数
from .utils import backoff_delay, to_csv, save_snapshot, load_snapshot

__all__ = [
    "__version__",
    # 核心类型
    "Dot",
    "Command",
    "Phase",
    "PhaseError",
    "NOOP",
    "CONFLICT_COARSE",
    "CONFLICT_READ_AWARE",
    "get",
    "put",
    "conflict",
    "is_read_star",
    "ballot_owner",
    "next_ballot",
    "dot_order",
    "MCollect",
    "MCollectAck",
    "MConsensus",
    "MConsensusAck",
    "MCommit",
    "MRecover",
    "MRecoverAck",
    "message_to_dict",
    "message_from_dict",
    # 协议
    "Process",
    "ProcessCrashedError",
    "ProtocolConfig",
    "CommandInfo",
    "HandlerOutput",
    "fast_path_condition",
    "threshold_union",
    "matching_replies",
    # 执行器
    "ExecGraph",
    "ExecutionError",
    # 键值存储
    "KvState",
    "ReplicatedKvs",
    "DuplicateInvocationError",
    "apply",
    # 模拟
    "SimConfig",
    "WorkloadConfig",
    "ConfigError",
    "latency_preset",
    "sim_config_from_dict",
    "load_sim_config",
    "Simulator",
    "run",
    "Trace",
    "TraceFormatError",
    "Operation",
    "extract_history",
    # 检查器
    "CheckReport",
    "CheckResult",
    "check_agreement",
    "check_conflict_coverage",
    "check_smr_spec",
    "check_linearizability",
    "check_fast_path_recoverability",
    "check_ballot_safety",
    "check_liveness",
    "check_pruning",
    "check_matching_oracle",
    "run_all_checks",
    "check_history",
    "SearchBudgetExceeded",
    # 统计
    "RunSummary",
    "summarize",
    "sweep",
    # 工具函数
    "backoff_delay",
    "to_csv",
    "save_snapshot",
    "load_snapshot",
]
