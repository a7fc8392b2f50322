"""
执行模块

把已提交的 (dot, cmd, deps) 流转换为确定性的执行顺序：
- 依赖图上求强连通分量，每个分量是一个最小的闭合批次
- 分量可达的依赖全部已提交（或已执行）时才可执行
- 批次内按 Dot 全序执行；Noop 标记为已执行但不交付给应用
"""

from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

import networkx as nx

from .core import Command, Dot


class ExecutionError(RuntimeError):
    """重复提交或重复执行同一个 Dot（协议实现错误）。"""


Batch = List[Tuple[Dot, Command]]


class ExecGraph:
    """
    一个进程的执行器。

    Attributes:
        committed: 已提交未执行的 Dot → (cmd, deps)
        executed: 已执行的 Dot 集合
        execution_log: (批次序号, Dot, Command)，按执行顺序
        batch_count: 已产出的批次数

    Example:
        >>> g = ExecGraph()
        >>> g.add_committed(Dot(1, 1), put('k', 'v'), frozenset())
        >>> [[str(d) for d, _ in b] for b in g.try_execute()]
        [['p1-1']]
    """

    def __init__(self):
        self.committed: Dict[Dot, Tuple[Command, FrozenSet[Dot]]] = {}
        self.executed: Set[Dot] = set()
        self.execution_log: List[Tuple[int, Dot, Command]] = []
        self.batch_count = 0
        self._graph = nx.DiGraph()

    def __repr__(self) -> str:
        return (f"ExecGraph(committed={len(self.committed)}, "
                f"executed={len(self.executed)}, batches={self.batch_count})")

    def __contains__(self, dot: Dot) -> bool:
        return dot in self.committed or dot in self.executed

    def add_committed(self, dot: Dot, cmd: Command, deps: Iterable[Dot]) -> None:
        """
        记录一个新提交的命令。

        Raises:
            ExecutionError: dot 已提交或已执行
        """
        if dot in self:
            raise ExecutionError(f"{dot} 已经提交过，不能重复加入执行器")
        deps = frozenset(deps)
        self.committed[dot] = (cmd, deps)
        self._graph.add_node(dot)
        for dep in deps:
            if dep not in self.executed and dep != dot:
                self._graph.add_edge(dot, dep)

    def try_execute(self) -> List[Batch]:
        """
        产出当前所有可执行的批次（按拓扑顺序：被依赖者在前）。

        Returns:
            批次列表；每个批次为按 Dot 全序排列的 (Dot, Command)，含 Noop
        """
        if not self.committed:
            return []

        condensed = nx.condensation(self._graph)
        scc_members: Dict[int, List[Dot]] = {
            node: sorted(data['members']) for node, data in condensed.nodes(data=True)
        }

        # 反向图上排序：被依赖者在前，互不相关的分量按最小成员升序
        order = list(nx.lexicographical_topological_sort(
            condensed.reverse(copy=False), key=lambda node: scc_members[node][0]))

        # 图中出现但尚未提交的节点（未知依赖）使其所在分量阻塞
        blocked: Dict[int, bool] = {}
        for node in order:
            is_blocked = any(dot not in self.committed for dot in scc_members[node])
            if not is_blocked:
                is_blocked = any(blocked[succ] for succ in condensed.successors(node))
            blocked[node] = is_blocked

        batches: List[Batch] = []
        for node in order:
            if blocked[node]:
                continue
            batch = [(dot, self.committed[dot][0]) for dot in scc_members[node]]
            self._mark_batch(batch)
            batches.append(batch)
        return batches

    def _mark_batch(self, batch: Batch) -> None:
        index = self.batch_count
        self.batch_count += 1
        for dot, cmd in batch:
            if dot in self.executed:
                raise ExecutionError(f"{dot} 被重复执行")
            self.executed.add(dot)
            del self.committed[dot]
            self.execution_log.append((index, dot, cmd))
        self._graph.remove_nodes_from(dot for dot, _ in batch)

    def batch_of(self, dot: Dot) -> Optional[FrozenSet[Dot]]:
        """dot 所在批次的成员集合；未执行时返回 None。"""
        index = next((i for i, d, _ in self.execution_log if d == dot), None)
        if index is None:
            return None
        return frozenset(d for i, d, _ in self.execution_log if i == index)
