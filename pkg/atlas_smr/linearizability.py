"""
线性一致性检查模块

对键值存储历史做 Wing-Gong 风格的深度优先搜索：
- 每一步只考虑"最小调用前沿"上的操作（没有其他未完成操作在它调用之前已经返回）
- (已线性化集合, 当前值) 记忆化，避免重复搜索
- 按 key 拆分历史（单 key 对象的线性一致性具有局部性）
- 未应答的 Put 可以在调用之后的任意位置生效，也可以不生效；未应答的 Get 丢弃

搜索状态数超过预算时抛出 SearchBudgetExceeded，与"违反"区分开。
"""

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from .kvs import ACK, EMPTY
from .trace import Operation

VERDICT_PASS = 'pass'
VERDICT_FAIL = 'fail'
VERDICT_BUDGET = 'budget-exhausted'


class SearchBudgetExceeded(Exception):
    """搜索状态数超过预算。"""

    def __init__(self, explored: int):
        self.explored = explored
        super().__init__(f"线性化搜索超过预算（已探索 {explored} 个状态）")


@dataclass
class LinearizabilityResult:
    """
    Attributes:
        verdict: 'pass' / 'fail' / 'budget-exhausted'
        key: 失败（或超预算）的 key
        witness: 失败 key 的历史（按调用顺序）；通过时为空
        order: 通过时每个 key 的线性化顺序
        explored: 总共探索的状态数
    """

    verdict: str
    key: Optional[str] = None
    witness: List[Operation] = field(default_factory=list)
    order: Dict[str, List[Operation]] = field(default_factory=dict)
    explored: int = 0

    @property
    def ok(self) -> bool:
        return self.verdict == VERDICT_PASS


class _KeySearch:
    """单个 key 的搜索。"""

    def __init__(self, ops: Sequence[Operation], budget: int):
        self.ops = list(ops)
        self.budget = budget
        self.explored = 0
        self.required = frozenset(i for i, op in enumerate(self.ops) if op.complete)
        self._failed: Set[Tuple[FrozenSet[int], Optional[str]]] = set()
        self._order: List[int] = []

    def run(self) -> Optional[List[Operation]]:
        if self._search(frozenset(), EMPTY):
            return [self.ops[i] for i in self._order]
        return None

    def _search(self, done: FrozenSet[int], value: Optional[str]) -> bool:
        if self.required <= done:
            return True
        memo = (done, value)
        if memo in self._failed:
            return False
        self.explored += 1
        if self.explored > self.budget:
            raise SearchBudgetExceeded(self.explored)

        min_resp = min(self.ops[i].responded for i in self.required - done)
        for i, op in enumerate(self.ops):
            if i in done or op.invoked > min_resp:
                continue
            next_value = self._step(op, value)
            if next_value is _ILLEGAL:
                continue
            self._order.append(i)
            if self._search(done | {i}, next_value):
                return True
            self._order.pop()
        self._failed.add(memo)
        return False

    @staticmethod
    def _step(op: Operation, value: Optional[str]):
        if op.cmd.is_read:
            return value if op.result == value else _ILLEGAL
        if op.complete and op.result != ACK:
            return _ILLEGAL
        return op.cmd.value


_ILLEGAL = object()


def split_by_key(history: Sequence[Operation]) -> Dict[str, List[Operation]]:
    """按 key 拆分历史，丢弃未应答的 Get 和 Noop。"""
    per_key: Dict[str, List[Operation]] = {}
    for op in history:
        if op.cmd.is_noop:
            continue
        if op.cmd.is_read and not op.complete:
            continue
        per_key.setdefault(op.cmd.key, []).append(op)
    for ops in per_key.values():
        ops.sort(key=lambda op: op.invoked)
    return per_key


def check_history(history: Sequence[Operation], budget: int = 200000) -> LinearizabilityResult:
    """
    检查一段客户端历史是否线性一致。

    Args:
        history: 操作列表（invoked / responded 为全序时间戳）
        budget: 每个 key 的搜索状态上限

    Returns:
        LinearizabilityResult

    Example:
        >>> w = Operation(1, Dot(1, 1), put('k', '1'), invoked=0, responded=1, result='ok')
        >>> r = Operation(2, Dot(2, 1), get('k'), invoked=2, responded=3, result=None)
        >>> check_history([w, r]).verdict
        'fail'
    """
    result = LinearizabilityResult(VERDICT_PASS)
    per_key = split_by_key(history)
    for key in sorted(per_key):
        search = _KeySearch(per_key[key], budget)
        try:
            order = search.run()
        except SearchBudgetExceeded:
            result.explored += search.explored
            return LinearizabilityResult(VERDICT_BUDGET, key=key, witness=per_key[key],
                                         explored=result.explored)
        result.explored += search.explored
        if order is None:
            return LinearizabilityResult(VERDICT_FAIL, key=key, witness=per_key[key],
                                         explored=result.explored)
        result.order[key] = order
    return result
