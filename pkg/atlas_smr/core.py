"""
核心类型模块

所有模块共享的基础类型：
- Dot: 命令全局唯一标识 <proc, seq>
- Command: 命令（Noop / Get / Put）与冲突关系
- Ballot: 选票分配（整数，按轮转归属进程）
- Phase: 命令在某进程上的阶段及合法迁移
- Message: 七种协议消息及其 JSON 编解码
"""

from dataclasses import dataclass
from enum import Enum
from functools import total_ordering
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Union


# ============ 异常 ============

class PhaseError(RuntimeError):
    """非法的阶段迁移（协议实现错误）。"""


# ============ Dot ============

@total_ordering
@dataclass(frozen=True)
class Dot:
    """
    命令标识 <proc, seq>。

    全序为 (seq, proc) 的字典序：大致按提交先后排列，同序号时按进程编号。

    Attributes:
        proc: 提交该命令的进程编号（1..n）
        seq: 该进程的本地提交计数（从 1 开始）
    """

    proc: int
    seq: int

    def sort_key(self) -> tuple:
        return (self.seq, self.proc)

    def __lt__(self, other: 'Dot') -> bool:
        if not isinstance(other, Dot):
            return NotImplemented
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        return f"p{self.proc}-{self.seq}"

    def __repr__(self) -> str:
        return f"Dot({self})"

    @classmethod
    def parse(cls, text: str) -> 'Dot':
        """
        解析 "p<proc>-<seq>" 格式的文本。

        Raises:
            ValueError: 格式不合法
        """
        if not isinstance(text, str) or not text.startswith('p') or '-' not in text:
            raise ValueError(f"非法的 Dot 文本: {text!r}")
        proc, _, seq = text[1:].partition('-')
        if not proc.isdigit() or not seq.isdigit():
            raise ValueError(f"非法的 Dot 文本: {text!r}")
        return cls(int(proc), int(seq))


def dot_order(a: Dot, b: Dot) -> int:
    """
    比较两个 Dot。

    Returns:
        -1（a < b）、0（相等）或 1（a > b）
    """
    ka, kb = a.sort_key(), b.sort_key()
    if ka < kb:
        return -1
    if ka > kb:
        return 1
    return 0


def dots_to_list(dots: Iterable[Dot]) -> List[str]:
    """按全序排序并编码为文本列表（用于日志和 trace）。"""
    return [str(d) for d in sorted(dots)]


def dots_from_list(items: Iterable[str]) -> FrozenSet[Dot]:
    return frozenset(Dot.parse(s) for s in items)


# ============ Command ============

NOOP_KIND = 'noop'
GET_KIND = 'get'
PUT_KIND = 'put'

# 冲突模式
CONFLICT_COARSE = 'coarse'          # 同 key 即冲突
CONFLICT_READ_AWARE = 'read-aware'  # 同 key 且至少一个 Put
CONFLICT_MODES = (CONFLICT_COARSE, CONFLICT_READ_AWARE)


@dataclass(frozen=True)
class Command:
    """
    复制状态机命令。

    Attributes:
        kind: 'noop' / 'get' / 'put'
        key: 记录键（Noop 为 None）
        value: Put 写入的值（Get/Noop 为 None）
        caller: 提交该命令的进程编号
        rid: 调用标识 "<caller>.<client>.<counter>"，保证每个应用命令唯一
    """

    kind: str
    key: Optional[str] = None
    value: Optional[str] = None
    caller: int = 0
    rid: str = ''

    @property
    def is_noop(self) -> bool:
        return self.kind == NOOP_KIND

    @property
    def is_read(self) -> bool:
        return self.kind == GET_KIND

    @property
    def is_write(self) -> bool:
        return self.kind == PUT_KIND

    @property
    def keys(self) -> FrozenSet[str]:
        if self.key is None:
            return frozenset()
        return frozenset([self.key])

    def to_dict(self) -> Dict[str, Any]:
        if self.is_noop:
            return {'kind': NOOP_KIND}
        data = {'kind': self.kind, 'key': self.key}
        if self.is_write:
            data['value'] = self.value
        data['caller'] = self.caller
        data['rid'] = self.rid
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Command':
        kind = data.get('kind')
        if kind == NOOP_KIND:
            return NOOP
        if kind not in (GET_KIND, PUT_KIND):
            raise ValueError(f"未知的命令类型: {kind!r}")
        return cls(
            kind=kind,
            key=data.get('key'),
            value=data.get('value'),
            caller=int(data.get('caller', 0)),
            rid=data.get('rid', ''),
        )

    def __str__(self) -> str:
        if self.is_noop:
            return 'Noop'
        if self.is_read:
            return f"Get({self.key})"
        return f"Put({self.key},{self.value})"


NOOP = Command(NOOP_KIND)


def get(key: str, caller: int = 0, rid: str = '') -> Command:
    return Command(GET_KIND, key=key, caller=caller, rid=rid)


def put(key: str, value: str, caller: int = 0, rid: str = '') -> Command:
    return Command(PUT_KIND, key=key, value=value, caller=caller, rid=rid)


def conflict(c: Command, d: Command, mode: str = CONFLICT_READ_AWARE) -> bool:
    """
    判断两个命令是否冲突（不可交换）。

    Noop 与任何命令冲突（包括 Noop）。应用命令之间：
    - coarse: 共享 key 即冲突
    - read-aware: 共享 key 且至少一个是 Put

    Args:
        c, d: 命令
        mode: 冲突模式

    Returns:
        是否冲突（对称）
    """
    if c.is_noop or d.is_noop:
        return True
    if not (c.keys & d.keys):
        return False
    if mode == CONFLICT_COARSE:
        return True
    return c.is_write or d.is_write


def is_read_star(c: Command) -> bool:
    """Read* 成员：单 key 的 Get（冲突关系对它是传递的）。"""
    return c.is_read and len(c.keys) == 1


# ============ Ballot ============

def ballot_owner(ballot: int, n: int) -> Optional[int]:
    """选票的归属进程；0 表示"无选票"，返回 None。"""
    if ballot <= 0:
        return None
    return (ballot - 1) % n + 1


def next_ballot(i: int, current: int, n: int) -> int:
    """
    进程 i 的下一个选票：i + n·(⌊current/n⌋ + 1)。

    结果严格大于 current 且大于 n，归属进程为 i。
    """
    if not 1 <= i <= n:
        raise ValueError(f"进程编号 {i} 不在 1..{n} 范围内")
    return i + n * (current // n + 1)


# ============ Phase ============

class Phase(Enum):
    START = 'start'
    COLLECT = 'collect'
    RECOVERING = 'recovering'
    COMMITTED = 'committed'
    EXECUTED = 'executed'


LEGAL_TRANSITIONS = {
    Phase.START: {Phase.COLLECT, Phase.RECOVERING, Phase.COMMITTED},
    Phase.COLLECT: {Phase.RECOVERING, Phase.COMMITTED},
    Phase.RECOVERING: {Phase.COMMITTED, Phase.RECOVERING},
    Phase.COMMITTED: {Phase.EXECUTED},
    Phase.EXECUTED: set(),
}


def check_transition(old: Phase, new: Phase) -> None:
    """
    Raises:
        PhaseError: 迁移不在 LEGAL_TRANSITIONS 中
    """
    if new not in LEGAL_TRANSITIONS[old]:
        raise PhaseError(f"非法阶段迁移: {old.value} -> {new.value}")


# ============ 协议消息 ============

@dataclass(frozen=True)
class MCollect:
    dot: Dot
    cmd: Command
    past: FrozenSet[Dot]
    quorum: FrozenSet[int]


@dataclass(frozen=True)
class MCollectAck:
    dot: Dot
    deps: FrozenSet[Dot]


@dataclass(frozen=True)
class MConsensus:
    dot: Dot
    cmd: Command
    deps: FrozenSet[Dot]
    ballot: int


@dataclass(frozen=True)
class MConsensusAck:
    dot: Dot
    ballot: int


@dataclass(frozen=True)
class MCommit:
    dot: Dot
    cmd: Command
    deps: FrozenSet[Dot]


@dataclass(frozen=True)
class MRecover:
    dot: Dot
    cmd: Command
    ballot: int


@dataclass(frozen=True)
class MRecoverAck:
    dot: Dot
    cmd: Command
    deps: FrozenSet[Dot]
    quorum: FrozenSet[int]
    abal: int
    ballot: int


Message = Union[MCollect, MCollectAck, MConsensus, MConsensusAck,
                MCommit, MRecover, MRecoverAck]

MESSAGE_TYPES = {
    cls.__name__: cls
    for cls in (MCollect, MCollectAck, MConsensus, MConsensusAck,
                MCommit, MRecover, MRecoverAck)
}


def message_to_dict(msg: Message) -> Dict[str, Any]:
    """
    将消息编码为字段顺序固定的字典（trace 序列化用）。

    集合字段按全序排序，保证相同消息得到相同字节。
    """
    data: Dict[str, Any] = {'type': type(msg).__name__, 'dot': str(msg.dot)}
    if isinstance(msg, (MCollect, MConsensus, MCommit, MRecover, MRecoverAck)):
        data['cmd'] = msg.cmd.to_dict()
    if isinstance(msg, MCollect):
        data['past'] = dots_to_list(msg.past)
        data['quorum'] = sorted(msg.quorum)
    if isinstance(msg, (MCollectAck, MConsensus, MCommit, MRecoverAck)):
        data['deps'] = dots_to_list(msg.deps)
    if isinstance(msg, MRecoverAck):
        data['quorum'] = sorted(msg.quorum)
        data['abal'] = msg.abal
    if isinstance(msg, (MConsensus, MConsensusAck, MRecover, MRecoverAck)):
        data['ballot'] = msg.ballot
    return data


def message_from_dict(data: Dict[str, Any]) -> Message:
    """
    从字典解码消息。

    Raises:
        ValueError: 未知消息类型或字段缺失
    """
    kind = data.get('type')
    if kind not in MESSAGE_TYPES:
        raise ValueError(f"未知的消息类型: {kind!r}")
    try:
        dot = Dot.parse(data['dot'])
        if kind == 'MCollect':
            return MCollect(dot, Command.from_dict(data['cmd']),
                            dots_from_list(data['past']), frozenset(data['quorum']))
        if kind == 'MCollectAck':
            return MCollectAck(dot, dots_from_list(data['deps']))
        if kind == 'MConsensus':
            return MConsensus(dot, Command.from_dict(data['cmd']),
                              dots_from_list(data['deps']), int(data['ballot']))
        if kind == 'MConsensusAck':
            return MConsensusAck(dot, int(data['ballot']))
        if kind == 'MCommit':
            return MCommit(dot, Command.from_dict(data['cmd']), dots_from_list(data['deps']))
        if kind == 'MRecover':
            return MRecover(dot, Command.from_dict(data['cmd']), int(data['ballot']))
        return MRecoverAck(dot, Command.from_dict(data['cmd']), dots_from_list(data['deps']),
                           frozenset(data['quorum']), int(data['abal']), int(data['ballot']))
    except KeyError as e:
        raise ValueError(f"消息 {kind} 缺少字段: {e}")
