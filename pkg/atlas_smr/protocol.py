"""
协议模块

单个进程上的 ATLAS 状态机：
- submit / MCollect / MCollectAck: start 与 collect 阶段、快速路径判定
- MConsensus / MConsensusAck: f+1 进程的慢速路径（Flexible Paxos Phase 2）
- MCommit: 提交
- recover / MRecover / MRecoverAck: 协调者失效后的恢复

处理函数是纯的：相同状态 + 相同输入 ⇒ 相同输出。所有发出的消息通过
HandlerOutput 返回，发给自己的消息在返回前同步处理完毕。
"""

from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from .core import (
    NOOP,
    CONFLICT_MODES,
    CONFLICT_READ_AWARE,
    Command,
    Dot,
    Message,
    MCollect,
    MCollectAck,
    MCommit,
    MConsensus,
    MConsensusAck,
    MRecover,
    MRecoverAck,
    Phase,
    PhaseError,
    check_transition,
    conflict,
    is_read_star,
    next_ballot,
)


class ProcessCrashedError(RuntimeError):
    """在已崩溃的进程上提交命令。"""


# 目的地：广播给所有进程（包括自己）
BROADCAST = '*'

# 提交路径
PATH_FAST = 'fast'
PATH_SLOW = 'slow'
PATH_RECOVERED = 'recovered'
PATH_READ = 'read'


# ============ 数据结构 ============

@dataclass(frozen=True)
class ProtocolConfig:
    """
    协议开关。

    Attributes:
        slow_path_pruning: 慢速路径只提议重数 ≥ f 的依赖
        nfr_reads: Read* 命令使用多数派快速仲裁并立即提交，且不进入他人依赖
        conflict_mode: 'coarse' 或 'read-aware'
    """

    slow_path_pruning: bool = False
    nfr_reads: bool = False
    conflict_mode: str = CONFLICT_READ_AWARE

    def __post_init__(self):
        if self.conflict_mode not in CONFLICT_MODES:
            raise ValueError(f"未知的冲突模式: {self.conflict_mode!r}，可选 {CONFLICT_MODES}")


@dataclass
class CommandInfo:
    """每个 Dot 的协议记录。"""

    cmd: Command = NOOP
    phase: Phase = Phase.START
    deps: FrozenSet[Dot] = frozenset()
    quorum: FrozenSet[int] = frozenset()
    bal: int = 0
    abal: int = 0


@dataclass
class CollectOutcome:
    """协调者收齐快速仲裁应答时的记录。"""

    dot: Dot
    acks: Dict[int, FrozenSet[Dot]]
    union: FrozenSet[Dot]
    proposal: FrozenSet[Dot]
    path: str
    matching: bool


@dataclass
class Decision:
    """某进程广播 MCommit 时的记录。"""

    dot: Dot
    cmd: Command
    deps: FrozenSet[Dot]
    path: str
    ballot: int


@dataclass
class HandlerOutput:
    """
    一次处理调用的全部输出。

    Attributes:
        outbound: (目的进程, 消息)，不含发给自己的消息
        local: 已同步处理的自发消息（按处理顺序）
        committed: 本地新提交的 (dot, cmd, deps)
        collects: 收齐快速仲裁应答的记录
        decisions: 广播 MCommit 的记录
        dropped: 因选票过期而丢弃的消息
        submitted: submit 分配的 Dot
        recovery_ballot: recover 使用的选票
    """

    outbound: List[Tuple[int, Message]] = field(default_factory=list)
    local: List[Message] = field(default_factory=list)
    committed: List[Tuple[Dot, Command, FrozenSet[Dot]]] = field(default_factory=list)
    collects: List[CollectOutcome] = field(default_factory=list)
    decisions: List[Decision] = field(default_factory=list)
    dropped: List[Message] = field(default_factory=list)
    submitted: Optional[Dot] = None
    recovery_ballot: Optional[int] = None


# ============ 快速路径判定 ============

def multiplicities(deps_by_proc: Mapping[int, Iterable[Dot]]) -> Dict[Dot, int]:
    """每个依赖被多少个仲裁成员报告。"""
    counts: Dict[Dot, int] = {}
    for deps in deps_by_proc.values():
        for dot in deps:
            counts[dot] = counts.get(dot, 0) + 1
    return counts


def fast_path_condition(deps_by_proc: Mapping[int, Iterable[Dot]], f: int) -> bool:
    """
    快速路径条件：并集中每个依赖的重数都 ≥ f。

    f = 1 时恒为真。

    Example:
        >>> a, b = Dot(1, 1), Dot(2, 1)
        >>> fast_path_condition({1: set(), 2: set(), 3: set(), 4: {b}}, f=2)
        False
    """
    return all(count >= f for count in multiplicities(deps_by_proc).values())


def threshold_union(deps_by_proc: Mapping[int, Iterable[Dot]], f: int) -> FrozenSet[Dot]:
    """⋃ᶠ：只保留重数 ≥ f 的依赖。"""
    return frozenset(dot for dot, count in multiplicities(deps_by_proc).items() if count >= f)


def matching_replies(deps_by_proc: Mapping[int, Iterable[Dot]]) -> bool:
    """对照谓词：所有应答的依赖集合完全相同（EPaxos 风格快速路径）。"""
    return len({frozenset(deps) for deps in deps_by_proc.values()}) <= 1


# ============ 仲裁选择 ============

def nearest(pid: int, n: int, count: int, latency: Optional[Sequence[Sequence[int]]] = None) -> FrozenSet[int]:
    """
    pid 自己加上延迟最小的 count 个其他进程（延迟相同按编号小优先）。
    """
    others = [j for j in range(1, n + 1) if j != pid]
    if latency is not None:
        others.sort(key=lambda j: (latency[pid - 1][j - 1], j))
    return frozenset([pid] + others[:count])


# ============ 进程状态机 ============

class Process:
    """
    一个 ATLAS 进程的协议状态。

    Attributes:
        pid: 进程编号（1..n）
        n: 集群规模
        f: 容错上限，1 ≤ f ≤ ⌊(n−1)/2⌋
        info: Dot → CommandInfo
        next_seq: 下一个本地提交序号
        config: 协议开关

    Example:
        >>> p = Process(1, n=3, f=1)
        >>> out = p.submit(put('k', 'v', caller=1, rid='1.0.0'))
        >>> sorted(dst for dst, _ in out.outbound)
        [2]
    """

    def __init__(
        self,
        pid: int,
        n: int,
        f: int,
        config: Optional[ProtocolConfig] = None,
        latency: Optional[Sequence[Sequence[int]]] = None,
    ):
        if not 1 <= f <= (n - 1) // 2:
            raise ValueError(f"f={f} 不满足 1 ≤ f ≤ ⌊(n−1)/2⌋ (n={n})")
        if not 1 <= pid <= n:
            raise ValueError(f"进程编号 {pid} 不在 1..{n} 范围内")
        self.pid = pid
        self.n = n
        self.f = f
        self.config = config or ProtocolConfig()
        self.info: Dict[Dot, CommandInfo] = {}
        self.next_seq = 1
        self.crashed = False

        self._fast_quorum = nearest(pid, n, n // 2 + f - 1, latency)
        self._read_quorum = nearest(pid, n, n // 2, latency)
        self._slow_quorum = nearest(pid, n, f, latency)

        # 冲突索引：非 start 阶段的 Dot，按 key 分桶；Noop 单独存放
        self._indexed: Dict[Dot, Command] = {}
        self._by_key: Dict[str, Set[Dot]] = {}
        self._noops: Set[Dot] = set()

        # 守卫为假的消息
        self._parked: Dict[Dot, List[Tuple[int, Message]]] = {}

        # 应答聚合，键为 (dot, ballot)；collect 阶段的选票记为 0
        self._collect_acks: Dict[Dot, Dict[int, FrozenSet[Dot]]] = {}
        self._consensus_acks: Dict[Tuple[Dot, int], Set[int]] = {}
        self._recover_acks: Dict[Tuple[Dot, int], Dict[int, MRecoverAck]] = {}
        self._fired: Set[Tuple[str, Dot, int]] = set()

        self._inbox: Deque[Tuple[int, Message]] = deque()

    def __repr__(self) -> str:
        return f"Process(pid={self.pid}, n={self.n}, f={self.f}, dots={len(self.info)})"

    # ============ 查询 ============

    def fastq(self, cmd: Optional[Command] = None) -> FrozenSet[int]:
        """快速仲裁：⌊n/2⌋+f 个进程；开启 nfr_reads 时 Read* 命令用多数派。"""
        if cmd is not None and self.config.nfr_reads and is_read_star(cmd):
            return self._read_quorum
        return self._fast_quorum

    def slowq(self) -> FrozenSet[int]:
        """慢速仲裁：自己加最近的 f 个进程。"""
        return self._slow_quorum

    def phase(self, dot: Dot) -> Phase:
        info = self.info.get(dot)
        return info.phase if info is not None else Phase.START

    def is_committed(self, dot: Dot) -> bool:
        return self.phase(dot) in (Phase.COMMITTED, Phase.EXECUTED)

    def conflicts(self, cmd: Command) -> FrozenSet[Dot]:
        """
        conflicts(c) = { id ∉ start | conflict(c, cmd[id]) }

        开启 nfr_reads 时额外排除存储命令属于 Read* 的 Dot。
        """
        if cmd.is_noop:
            candidates: Iterable[Dot] = self._indexed.keys()
        else:
            candidates = set(self._noops)
            for key in cmd.keys:
                candidates |= self._by_key.get(key, set())
        mode = self.config.conflict_mode
        nfr = self.config.nfr_reads
        result = set()
        for dot in candidates:
            stored = self._indexed[dot]
            if nfr and is_read_star(stored):
                continue
            if conflict(cmd, stored, mode):
                result.add(dot)
        return frozenset(result)

    # ============ 入口 ============

    def submit(self, cmd: Command) -> HandlerOutput:
        """
        提交一个应用命令，本进程成为其初始协调者。

        Raises:
            ProcessCrashedError: 进程已崩溃
            ValueError: 提交 Noop
        """
        if self.crashed:
            raise ProcessCrashedError(f"进程 {self.pid} 已崩溃，拒绝提交 {cmd}")
        if cmd.is_noop:
            raise ValueError("不能提交 Noop 命令")
        dot = Dot(self.pid, self.next_seq)
        self.next_seq += 1
        past = self.conflicts(cmd)
        quorum = self.fastq(cmd)

        out = HandlerOutput(submitted=dot)
        self._send(out, quorum, MCollect(dot, cmd, past, quorum))
        self._drain(out)
        return out

    def receive(self, src: int, msg: Message) -> HandlerOutput:
        """处理来自 src 的一条消息。"""
        out = HandlerOutput()
        if self.crashed:
            return out
        self._dispatch(src, msg, out)
        self._drain(out)
        return out

    def recover(self, dot: Dot) -> HandlerOutput:
        """
        以更高的选票接管 dot。已提交时为空操作。
        """
        out = HandlerOutput()
        if self.crashed or self.is_committed(dot):
            return out
        info = self._info(dot)
        ballot = next_ballot(self.pid, info.bal, self.n)
        out.recovery_ballot = ballot
        self._send(out, BROADCAST, MRecover(dot, info.cmd, ballot))
        self._drain(out)
        return out

    def mark_executed(self, dot: Dot) -> None:
        self._update(dot, phase=Phase.EXECUTED)

    # ============ 消息处理 ============

    def _dispatch(self, src: int, msg: Message, out: HandlerOutput) -> None:
        if isinstance(msg, MCollect):
            self._handle_mcollect(src, msg, out)
        elif isinstance(msg, MCollectAck):
            self._handle_mcollectack(src, msg, out)
        elif isinstance(msg, MConsensus):
            self._handle_mconsensus(src, msg, out)
        elif isinstance(msg, MConsensusAck):
            self._handle_mconsensusack(src, msg, out)
        elif isinstance(msg, MCommit):
            self._handle_mcommit(src, msg, out)
        elif isinstance(msg, MRecover):
            self._handle_mrecover(src, msg, out)
        elif isinstance(msg, MRecoverAck):
            self._handle_mrecoverack(src, msg, out)
        else:
            raise TypeError(f"未知的消息: {msg!r}")

    def _handle_mcollect(self, src: int, msg: MCollect, out: HandlerOutput) -> None:
        info = self._info(msg.dot)
        # bal > 0 说明已有恢复接手，不能再覆盖已接受的值
        if info.phase != Phase.START or info.bal != 0:
            self._parked.setdefault(msg.dot, []).append((src, msg))
            return
        deps = self.conflicts(msg.cmd) | msg.past
        self._update(msg.dot, cmd=msg.cmd, deps=deps, quorum=msg.quorum, phase=Phase.COLLECT)
        self._send(out, [src], MCollectAck(msg.dot, deps))
        self._on_change(msg.dot, out)

    def _handle_mcollectack(self, src: int, msg: MCollectAck, out: HandlerOutput) -> None:
        if ('collect', msg.dot, 0) in self._fired:
            return
        acks = self._collect_acks.setdefault(msg.dot, {})
        if src in acks:
            return
        acks[src] = msg.deps
        self._try_collect(msg.dot, out)

    def _try_collect(self, dot: Dot, out: HandlerOutput) -> None:
        if ('collect', dot, 0) in self._fired:
            return
        info = self.info.get(dot)
        if info is None or info.phase != Phase.COLLECT or not info.quorum:
            return
        acks = self._collect_acks.get(dot, {})
        if not info.quorum <= acks.keys():
            return
        self._fired.add(('collect', dot, 0))

        deps_by_proc = {j: acks[j] for j in sorted(info.quorum)}
        union = frozenset().union(*deps_by_proc.values())
        matching = matching_replies(deps_by_proc)

        if self.config.nfr_reads and is_read_star(info.cmd):
            out.collects.append(CollectOutcome(dot, deps_by_proc, union, union, PATH_READ, matching))
            self._decide(out, dot, info.cmd, union, PATH_READ, 0)
            return

        if fast_path_condition(deps_by_proc, self.f):
            out.collects.append(CollectOutcome(dot, deps_by_proc, union, union, PATH_FAST, matching))
            self._decide(out, dot, info.cmd, union, PATH_FAST, 0)
            return

        if self.config.slow_path_pruning:
            proposal = threshold_union(deps_by_proc, self.f)
        else:
            proposal = union
        out.collects.append(CollectOutcome(dot, deps_by_proc, union, proposal, PATH_SLOW, matching))
        self._send(out, self.slowq(), MConsensus(dot, info.cmd, proposal, self.pid))

    def _handle_mconsensus(self, src: int, msg: MConsensus, out: HandlerOutput) -> None:
        info = self._info(msg.dot)
        if info.bal > msg.ballot:
            out.dropped.append(msg)
            return
        if info.phase not in (Phase.COMMITTED, Phase.EXECUTED):
            self._update(msg.dot, cmd=msg.cmd, deps=msg.deps)
        info.bal = msg.ballot
        info.abal = msg.ballot
        self._send(out, [src], MConsensusAck(msg.dot, msg.ballot))
        self._on_change(msg.dot, out)

    def _handle_mconsensusack(self, src: int, msg: MConsensusAck, out: HandlerOutput) -> None:
        if ('consensus', msg.dot, msg.ballot) in self._fired:
            return
        self._consensus_acks.setdefault((msg.dot, msg.ballot), set()).add(src)
        self._try_consensus(msg.dot, msg.ballot, out)

    def _try_consensus(self, dot: Dot, ballot: int, out: HandlerOutput) -> None:
        if ('consensus', dot, ballot) in self._fired:
            return
        info = self.info.get(dot)
        if info is None or info.bal != ballot:
            return
        if len(self._consensus_acks.get((dot, ballot), ())) < self.f + 1:
            return
        self._fired.add(('consensus', dot, ballot))
        if ballot == dot.proc and self.pid == dot.proc:
            path = PATH_SLOW
        else:
            path = PATH_RECOVERED
        self._decide(out, dot, info.cmd, info.deps, path, ballot)

    def _handle_mcommit(self, src: int, msg: MCommit, out: HandlerOutput) -> None:
        info = self._info(msg.dot)
        if info.phase in (Phase.COMMITTED, Phase.EXECUTED):
            return
        self._update(msg.dot, cmd=msg.cmd, deps=msg.deps, phase=Phase.COMMITTED)
        out.committed.append((msg.dot, msg.cmd, frozenset(msg.deps)))
        self._on_change(msg.dot, out)

    def _handle_mrecover(self, src: int, msg: MRecover, out: HandlerOutput) -> None:
        info = self._info(msg.dot)
        if info.phase in (Phase.COMMITTED, Phase.EXECUTED):
            self._send(out, [src], MCommit(msg.dot, info.cmd, info.deps))
            return
        if info.bal >= msg.ballot:
            out.dropped.append(msg)
            return
        if info.bal == 0 and info.phase == Phase.START:
            self._update(msg.dot, cmd=msg.cmd, deps=self.conflicts(msg.cmd))
        info.bal = msg.ballot
        self._update(msg.dot, phase=Phase.RECOVERING)
        self._send(out, [src], MRecoverAck(
            msg.dot, info.cmd, info.deps, info.quorum, info.abal, msg.ballot))
        self._on_change(msg.dot, out)

    def _handle_mrecoverack(self, src: int, msg: MRecoverAck, out: HandlerOutput) -> None:
        if ('recover', msg.dot, msg.ballot) in self._fired:
            return
        acks = self._recover_acks.setdefault((msg.dot, msg.ballot), {})
        if src in acks:
            return
        acks[src] = msg
        self._try_recover(msg.dot, msg.ballot, out)

    def _try_recover(self, dot: Dot, ballot: int, out: HandlerOutput) -> None:
        if ('recover', dot, ballot) in self._fired:
            return
        info = self.info.get(dot)
        if info is None or info.bal != ballot:
            return
        acks = self._recover_acks.get((dot, ballot), {})
        if len(acks) < self.n - self.f:
            return
        self._fired.add(('recover', dot, ballot))

        senders = sorted(acks)
        accepted = [j for j in senders if acks[j].abal != 0]
        if accepted:
            k = max(accepted, key=lambda j: (acks[j].abal, -j))
            cmd, deps = acks[k].cmd, acks[k].deps
        else:
            known = [j for j in senders if acks[j].quorum]
            if known:
                k = known[0]
                if dot.proc in acks:
                    members = senders
                else:
                    members = [j for j in senders if j in acks[k].quorum]
                cmd = acks[k].cmd
                deps = frozenset().union(*(acks[j].deps for j in members))
            else:
                cmd, deps = NOOP, frozenset()
        self._send(out, BROADCAST, MConsensus(dot, cmd, deps, ballot))

    # ============ 内部工具 ============

    def _decide(self, out: HandlerOutput, dot: Dot, cmd: Command, deps: FrozenSet[Dot],
                path: str, ballot: int) -> None:
        out.decisions.append(Decision(dot, cmd, frozenset(deps), path, ballot))
        self._send(out, BROADCAST, MCommit(dot, cmd, frozenset(deps)))

    def _send(self, out: HandlerOutput, dests: Union[str, Iterable[int]], msg: Message) -> None:
        if dests == BROADCAST:
            dests = range(1, self.n + 1)
        for dst in sorted(dests):
            if dst == self.pid:
                self._inbox.append((self.pid, msg))
            else:
                out.outbound.append((dst, msg))

    def _drain(self, out: HandlerOutput) -> None:
        while self._inbox:
            src, msg = self._inbox.popleft()
            out.local.append(msg)
            self._dispatch(src, msg, out)

    def _on_change(self, dot: Dot, out: HandlerOutput) -> None:
        """dot 的状态变化后，重新评估挂起的消息和应答聚合。"""
        parked = self._parked.pop(dot, None)
        if parked:
            for src, msg in parked:
                self._dispatch(src, msg, out)
        self._try_collect(dot, out)
        info = self.info.get(dot)
        if info is not None and info.bal:
            self._try_consensus(dot, info.bal, out)
            self._try_recover(dot, info.bal, out)

    def _info(self, dot: Dot) -> CommandInfo:
        info = self.info.get(dot)
        if info is None:
            info = CommandInfo()
            self.info[dot] = info
        return info

    def _update(
        self,
        dot: Dot,
        cmd: Optional[Command] = None,
        deps: Optional[Iterable[Dot]] = None,
        quorum: Optional[Iterable[int]] = None,
        phase: Optional[Phase] = None,
    ) -> None:
        info = self._info(dot)
        if phase is not None and phase != info.phase:
            check_transition(info.phase, phase)
        if quorum is not None:
            quorum = frozenset(quorum)
            if info.quorum and info.quorum != quorum:
                raise PhaseError(f"{dot} 的快速仲裁不可更改: {sorted(info.quorum)} -> {sorted(quorum)}")
        self._unindex(dot)
        if cmd is not None:
            info.cmd = cmd
        if deps is not None:
            info.deps = frozenset(deps)
        if quorum is not None:
            info.quorum = quorum
        if phase is not None:
            info.phase = phase
        self._index(dot, info)

    def _index(self, dot: Dot, info: CommandInfo) -> None:
        if info.phase == Phase.START:
            return
        self._indexed[dot] = info.cmd
        if info.cmd.is_noop:
            self._noops.add(dot)
        else:
            for key in info.cmd.keys:
                self._by_key.setdefault(key, set()).add(dot)

    def _unindex(self, dot: Dot) -> None:
        cmd = self._indexed.pop(dot, None)
        if cmd is None:
            return
        if cmd.is_noop:
            self._noops.discard(dot)
        else:
            for key in cmd.keys:
                self._by_key.get(key, set()).discard(dot)
