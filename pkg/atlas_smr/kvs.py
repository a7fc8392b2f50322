"""
键值存储模块

- KvState / apply: 键值状态机 τ
- ReplicatedKvs: 基于协议的通用构造（invoke → pending → deliver）
"""

from concurrent.futures import Future
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

from .core import Command, Dot
from .executor import ExecutionError


class DuplicateInvocationError(ValueError):
    """同一命令被调用了两次。"""


# Get 未写过的 key 时返回的空值
EMPTY = None
# Put 的应答
ACK = 'ok'


# ============ 状态机 ============

@dataclass(frozen=True)
class KvState:
    """不可变的键值状态。"""

    store: Mapping[str, str] = field(default_factory=dict)

    def get(self, key: str) -> Optional[str]:
        return self.store.get(key, EMPTY)


def apply(state: KvState, cmd: Command) -> Tuple[KvState, Optional[str]]:
    """
    执行一个命令。

    Args:
        state: 当前状态
        cmd: Get 或 Put

    Returns:
        (新状态, 应答)。Get 返回当前值或 None；Put 返回 'ok'

    Raises:
        ValueError: cmd 为 Noop

    Example:
        >>> s, v = apply(KvState(), put('k', '7'))
        >>> s.get('k'), v
        ('7', 'ok')
    """
    if cmd.is_noop:
        raise ValueError("Noop 不交付给状态机")
    if cmd.is_read:
        return state, state.get(cmd.key)
    store = dict(state.store)
    store[cmd.key] = cmd.value
    return KvState(store), ACK


# ============ 通用构造 ============

_IN_FLIGHT = object()
_CANCELLED = object()


class ReplicatedKvs:
    """
    一个进程上的复制键值存储。

    Attributes:
        pid: 所属进程
        state: 当前 KvState
        log: 已交付命令序列 λ
        responses: rid → 应答（仅本进程发起的命令）

    Example:
        >>> app = ReplicatedKvs(1, submit=lambda cmd: Dot(1, 1))
        >>> fut = app.invoke(put('k', 'v', caller=1, rid='1.0.0'))
        >>> app.on_deliver(Dot(1, 1), put('k', 'v', caller=1, rid='1.0.0'))
        >>> fut.result()
        'ok'
    """

    def __init__(self, pid: int, submit):
        """
        Args:
            pid: 进程编号
            submit: 把命令交给协议的回调，返回分配的 Dot
        """
        self.pid = pid
        self.state = KvState()
        self.log: List[Command] = []
        self.responses: Dict[str, Optional[str]] = {}
        self._submit = submit
        self._pending: Dict[str, object] = {}
        self._futures: Dict[str, Future] = {}
        self._by_dot: Dict[Dot, str] = {}
        self._delivered: set = set()

    def __repr__(self) -> str:
        return f"ReplicatedKvs(pid={self.pid}, log={len(self.log)}, pending={self.pending_count})"

    @property
    def pending_count(self) -> int:
        return sum(1 for v in self._pending.values() if v is _IN_FLIGHT)

    def invoke(self, cmd: Command) -> Future:
        """
        调用命令，返回在本地执行后完成的 Future。

        Raises:
            DuplicateInvocationError: 同一 rid 已被调用过
        """
        if cmd.rid in self._pending:
            raise DuplicateInvocationError(f"命令 {cmd.rid} 已经调用过")
        future: Future = Future()
        self._pending[cmd.rid] = _IN_FLIGHT
        self._futures[cmd.rid] = future
        dot = self._submit(cmd)
        if dot is not None:
            self._by_dot[dot] = cmd.rid
        return future

    def on_deliver(self, dot: Dot, cmd: Command) -> Optional[str]:
        """
        交付一个已执行的应用命令：追加到 λ 并执行 τ。

        Returns:
            应答值
        """
        if cmd.rid in self._delivered:
            raise ExecutionError(f"命令 {cmd.rid} 被交付了两次")
        self._delivered.add(cmd.rid)
        self.log.append(cmd)
        self.state, value = apply(self.state, cmd)
        if cmd.caller == self.pid and self._pending.get(cmd.rid) is _IN_FLIGHT:
            self._pending[cmd.rid] = value
            self.responses[cmd.rid] = value
            self._futures.pop(cmd.rid).set_result(value)
        return value

    def on_noop(self, dot: Dot) -> Optional[str]:
        """
        本进程发起的 dot 以 Noop 执行：放弃这次调用。

        Returns:
            被放弃的 rid（调用方可用新 rid 重试）；无关的 dot 返回 None
        """
        rid = self._by_dot.get(dot)
        if rid is None or self._pending.get(rid) is not _IN_FLIGHT:
            return None
        self._pending[rid] = _CANCELLED
        self._futures.pop(rid).cancel()
        return rid

    def is_pending(self, rid: str) -> bool:
        return self._pending.get(rid) is _IN_FLIGHT
