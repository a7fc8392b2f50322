"""
模拟器模块

确定性的离散事件模拟：
- 虚拟时钟（整数毫秒）、延迟矩阵 + 抖动、非 FIFO 网络
- 崩溃注入、恢复定时器（按进程排名错开，竞争时指数退避）
- 闭环客户端负载和脚本化提交

相同的 SimConfig（含 seed）⇒ 字节级相同的 Trace。
"""

import heapq
import random
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Set, Tuple

from .core import Command, Dot, Phase, dots_to_list, get, is_read_star, message_to_dict, put
from .executor import ExecGraph
from .kvs import ReplicatedKvs
from .protocol import HandlerOutput, Process
from .sim_config import SimConfig
from .trace import STATUS_HORIZON, STATUS_QUIESCENT, STATUS_STALLED, Trace
from .utils import backoff_delay


# 事件类型（同一时刻按调度先后执行）
EV_CRASH = 'crash'
EV_DELIVER = 'deliver'
EV_CLIENT = 'client'
EV_SCRIPT = 'script'
EV_TIMER = 'timer'

# 冲突 key
HOT_KEY = '0'
# 重试间隔上限 = 恢复超时 × 该倍数
MAX_BACKOFF_FACTOR = 64


@dataclass
class ClientState:
    """一个闭环客户端。"""

    pid: int
    index: int
    issued: int = 0
    invocations: int = 0
    retry: Optional[Tuple[str, str]] = None  # (op, key)
    done: bool = False


class Simulator:
    """
    ATLAS 集群模拟器。

    Attributes:
        config: SimConfig
        now: 当前虚拟时间
        processes / executors / apps: 每个进程的协议状态、执行器和 KVS
        crashed: 已崩溃进程
        trace: 事件日志
        recovery_count: 发起恢复的次数
        status: 结束状态（run 之后）

    Example:
        >>> sim = Simulator(sim_config_from_dict({'n': 3, 'f': 1, 'seed': 7}))
        >>> trace = sim.run()
        >>> trace.status
        'quiescent'
    """

    def __init__(self, config: SimConfig, verbose: bool = False):
        self.config = config
        self.verbose = verbose
        self.rng = random.Random(config.seed)
        self.now = 0
        self.trace = Trace()
        self.crashed: Set[int] = set()
        self.recovery_count = 0
        self.status: Optional[str] = None
        self.stuck: List[str] = []

        n = config.n
        latency = [list(row) for row in config.latency]
        self.processes: Dict[int, Process] = {
            pid: Process(pid, n, config.f, config.protocol, latency) for pid in range(1, n + 1)
        }
        self.executors: Dict[int, ExecGraph] = {pid: ExecGraph() for pid in range(1, n + 1)}
        self.apps: Dict[int, ReplicatedKvs] = {
            pid: ReplicatedKvs(pid, submit=self._make_submit(pid)) for pid in range(1, n + 1)
        }

        self._queue: List[Tuple[int, int, str, Any]] = []
        self._seq = 0
        self._msg_id = 0
        self._first_seen: Dict[Tuple[int, Dot], int] = {}
        self._rid_dot: Dict[str, Dot] = {}
        self._clients: Dict[Tuple[int, int], ClientState] = {}

        # 崩溃先于同一时刻的其他事件
        for pid, at in config.crashes:
            self._schedule(at, EV_CRASH, pid)
        for index, item in enumerate(config.script):
            self._schedule(item.at, EV_SCRIPT, index)
        for pid in range(1, n + 1):
            for c in range(config.workload.clients_per_process):
                self._clients[(pid, c)] = ClientState(pid, c)
                if config.workload.commands_per_client > 0:
                    self._schedule(0, EV_CLIENT, (pid, c))

    def __call__(self) -> Trace:
        """可调用接口，执行模拟。"""
        return self.run()

    def __repr__(self) -> str:
        return (f"Simulator(n={self.config.n}, f={self.config.f}, seed={self.config.seed}, "
                f"now={self.now}, crashed={sorted(self.crashed)})")

    @property
    def alive(self) -> List[int]:
        return [pid for pid in sorted(self.processes) if pid not in self.crashed]

    # ============ 主循环 ============

    def run(self) -> Trace:
        """
        运行到静止或时间上限。

        Returns:
            完整 Trace（以 end 事件结尾）
        """
        cfg = self.config
        if self.verbose:
            print("=" * 60)
            print("🚀 ATLAS 模拟")
            print(f"   n={cfg.n}, f={cfg.f}, seed={cfg.seed}")
            print(f"   延迟: {cfg.latency_name or '自定义矩阵'}, 抖动: {cfg.jitter}")
            print(f"   负载: {cfg.workload.clients_per_process} 客户端/进程 × "
                  f"{cfg.workload.commands_per_client} 命令, ρ={cfg.workload.conflict_rate}")
            if cfg.crashes:
                print(f"   崩溃: {', '.join(f'p{p}@{t}' for p, t in cfg.crashes)}")
            print("=" * 60)

        self.trace.record(0, 'start', config=cfg.to_dict())

        reached_horizon = False
        while self._queue:
            t, _, kind, payload = heapq.heappop(self._queue)
            if t > cfg.horizon:
                reached_horizon = True
                break
            self.now = t
            if kind == EV_CRASH:
                self._on_crash(payload)
            elif kind == EV_DELIVER:
                self._on_deliver(*payload)
            elif kind == EV_CLIENT:
                self._on_client(payload)
            elif kind == EV_SCRIPT:
                self._on_script(payload)
            elif kind == EV_TIMER:
                self._on_timer(*payload)

        self.stuck = dots_to_list(self._stuck_dots())
        if reached_horizon:
            self.status = STATUS_HORIZON
        elif self.stuck:
            self.status = STATUS_STALLED
        else:
            self.status = STATUS_QUIESCENT
        self.trace.record(self.now, 'end', status=self.status, stuck=self.stuck)

        if self.verbose:
            executed = sum(1 for _ in self.trace.of_kind('execute'))
            print(f"\n📊 事件: {len(self.trace)}，执行: {executed}，恢复: {self.recovery_count}")
            if self.status == STATUS_QUIESCENT:
                print(f"✅ 模拟结束于 t={self.now} ({self.status})")
            else:
                print(f"⚠️  模拟结束于 t={self.now} ({self.status})，未完成: {len(self.stuck)} 个")
        return self.trace

    def snapshot(self) -> Dict[str, Any]:
        """结束状态（可用 dill 保存）。"""
        return {
            'config': self.config,
            'status': self.status,
            'processes': self.processes,
            'executors': self.executors,
            'stores': {pid: app.state for pid, app in self.apps.items()},
            'logs': {pid: list(app.log) for pid, app in self.apps.items()},
            'trace': self.trace,
        }

    # ============ 调度 ============

    def _schedule(self, t: int, kind: str, payload: Any) -> None:
        heapq.heappush(self._queue, (t, self._seq, kind, payload))
        self._seq += 1

    def _delay(self, src: int, dst: int) -> int:
        base = self.config.latency[src - 1][dst - 1]
        jitter = self.rng.randint(0, self.config.jitter) if self.config.jitter else 0
        return base + jitter

    # ============ 事件处理 ============

    def _on_crash(self, pid: int) -> None:
        if pid in self.crashed:
            return
        self.crashed.add(pid)
        self.processes[pid].crashed = True
        self.trace.record(self.now, 'crash', proc=pid)

    def _on_deliver(self, mid: int, src: int, dst: int, msg) -> None:
        if dst in self.crashed:
            return
        self.trace.record(self.now, 'deliver', id=mid, src=src, dst=dst)
        out = self.processes[dst].receive(src, msg)
        self._note_dot(dst, msg.dot)
        self._apply_output(dst, out)

    def _on_client(self, key: Tuple[int, int]) -> None:
        client = self._clients[key]
        if client.pid in self.crashed or client.done:
            return
        workload = self.config.workload
        if client.retry is not None:
            op, record_key = client.retry
            client.retry = None
        else:
            if client.issued >= workload.commands_per_client:
                client.done = True
                return
            if self.rng.random() < workload.conflict_rate:
                record_key = HOT_KEY
            else:
                record_key = f"k{client.pid}.{client.index}.{client.issued}"
            op = 'get' if self.rng.random() < workload.read_ratio else 'put'
            client.issued += 1
        rid = f"{client.pid}.{client.index}.{client.invocations}"
        client.invocations += 1
        self._invoke(client.pid, op, record_key, rid, client=key)

    def _on_script(self, index: int) -> None:
        item = self.config.script[index]
        if item.proc in self.crashed:
            return
        self._invoke(item.proc, item.op, item.key, f"{item.proc}.s.{index}", value=item.value)

    def _on_timer(self, pid: int, dot: Dot, attempt: int) -> None:
        if pid in self.crashed:
            return
        process = self.processes[pid]
        if process.is_committed(dot):
            return
        out = process.recover(dot)
        self.recovery_count += 1
        self.trace.record(self.now, 'recover', proc=pid, dot=str(dot), ballot=out.recovery_ballot)
        self._apply_output(pid, out)

        timeout = self.config.recovery_timeout
        wait = backoff_delay(attempt + 1, timeout, MAX_BACKOFF_FACTOR * timeout)
        self._schedule(self.now + wait + self._timer_jitter(), EV_TIMER, (pid, dot, attempt + 1))

    # ============ 客户端 ============

    def _invoke(self, pid: int, op: str, key: str, rid: str,
                value: Optional[str] = None, client: Optional[Tuple[int, int]] = None) -> None:
        if op == 'get':
            cmd = get(key, caller=pid, rid=rid)
        else:
            if value is None:
                value = rid.ljust(self.config.workload.payload_bytes, '_')
            cmd = put(key, value, caller=pid, rid=rid)
        future = self.apps[pid].invoke(cmd)
        future.add_done_callback(lambda fut: self._on_response(pid, cmd, fut, client))

    def _make_submit(self, pid: int):
        def submit(cmd: Command) -> Dot:
            out = self.processes[pid].submit(cmd)
            dot = out.submitted
            self._rid_dot[cmd.rid] = dot
            self.trace.record(self.now, 'invoke', proc=pid, dot=str(dot), cmd=cmd.to_dict())
            self._note_dot(pid, dot)
            self._apply_output(pid, out)
            return dot
        return submit

    def _on_response(self, pid: int, cmd: Command, future, client: Optional[Tuple[int, int]]) -> None:
        if future.cancelled():
            # 以 Noop 执行：同一操作以新命令重试
            if client is not None:
                self._clients[client].retry = (cmd.kind, cmd.key)
                self._schedule(self.now, EV_CLIENT, client)
            return
        self.trace.record(self.now, 'response', proc=pid, dot=str(self._rid_dot[cmd.rid]),
                          value=future.result())
        if client is not None:
            self._schedule(self.now, EV_CLIENT, client)

    # ============ 协议输出 ============

    def _apply_output(self, pid: int, out: HandlerOutput) -> None:
        for msg in out.local:
            mid = self._next_msg_id()
            self.trace.record(self.now, 'send', id=mid, src=pid, dst=pid, msg=message_to_dict(msg))
            self.trace.record(self.now, 'deliver', id=mid, src=pid, dst=pid)
            self._note_dot(pid, msg.dot)

        for dst, msg in out.outbound:
            mid = self._next_msg_id()
            self.trace.record(self.now, 'send', id=mid, src=pid, dst=dst, msg=message_to_dict(msg))
            self._schedule(self.now + self._delay(pid, dst), EV_DELIVER, (mid, pid, dst, msg))

        for outcome in out.collects:
            self.trace.record(
                self.now, 'collect', proc=pid, dot=str(outcome.dot),
                acks={str(j): dots_to_list(deps) for j, deps in outcome.acks.items()},
                union=dots_to_list(outcome.union), proposal=dots_to_list(outcome.proposal),
                path=outcome.path, matching=outcome.matching)

        for decision in out.decisions:
            self.trace.record(
                self.now, 'commit', proc=pid, dot=str(decision.dot), cmd=decision.cmd.to_dict(),
                deps=dots_to_list(decision.deps), path=decision.path, ballot=decision.ballot)

        if not out.committed:
            return
        executor = self.executors[pid]
        for dot, cmd, deps in out.committed:
            executor.add_committed(dot, cmd, deps)
            for dep in deps:
                self._note_dot(pid, dep)
        batches = executor.try_execute()
        first = executor.batch_count - len(batches)
        for index, batch in enumerate(batches, start=first):
            for dot, cmd in batch:
                self.processes[pid].mark_executed(dot)
            for dot, cmd in batch:
                self.trace.record(self.now, 'execute', proc=pid, batch=index,
                                  dot=str(dot), cmd=cmd.to_dict())
                if cmd.is_noop:
                    self.apps[pid].on_noop(dot)
                else:
                    self.apps[pid].on_deliver(dot, cmd)

    def _next_msg_id(self) -> int:
        self._msg_id += 1
        return self._msg_id

    # ============ 恢复定时器 ============

    def _note_dot(self, pid: int, dot: Dot) -> None:
        """记录 pid 第一次见到 dot 的时间，并为它安排恢复定时器。"""
        if (pid, dot) in self._first_seen or pid in self.crashed:
            return
        process = self.processes[pid]
        if process.is_committed(dot):
            return
        info = process.info.get(dot)
        if (self.config.protocol.nfr_reads and pid != dot.proc
                and info is not None and is_read_star(info.cmd)):
            return
        self._first_seen[(pid, dot)] = self.now
        alive = self.alive
        rank = alive.index(pid)
        wait = self.config.recovery_timeout * (1 + rank)
        self._schedule(self.now + wait + self._timer_jitter(), EV_TIMER, (pid, dot, 0))

    def _timer_jitter(self) -> int:
        bound = self.config.recovery_timeout // 10
        return self.rng.randint(0, bound) if bound else 0

    def _stuck_dots(self) -> Set[Dot]:
        nfr = self.config.protocol.nfr_reads
        stuck = set()
        for pid in self.alive:
            for dot, info in self.processes[pid].info.items():
                if info.phase == Phase.EXECUTED:
                    continue
                # 协调者已崩溃的 Read* 命令无人恢复
                if nfr and dot.proc in self.crashed and is_read_star(info.cmd):
                    continue
                stuck.add(dot)
        return stuck


def run(config: SimConfig, verbose: bool = False) -> Trace:
    """运行一次模拟，返回 Trace。"""
    return Simulator(config, verbose=verbose).run()
