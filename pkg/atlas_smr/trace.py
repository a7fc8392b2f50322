"""
Trace 模块

模拟运行的事件日志：
- 事件为字段顺序固定的字典，每行一个 JSON（JSONL）
- 第一个事件是 start（完整 SimConfig），最后一个是 end
- 从 invoke / response 事件提取客户端历史（供线性一致性检查）

事件格式:
    start    {t, ev, config}
    send     {t, ev, id, src, dst, msg}
    deliver  {t, ev, id, src, dst}
    crash    {t, ev, proc}
    invoke   {t, ev, proc, dot, cmd}
    response {t, ev, proc, dot, value}
    collect  {t, ev, proc, dot, acks, union, proposal, path, matching}
    commit   {t, ev, proc, dot, cmd, deps, path, ballot}
    execute  {t, ev, proc, batch, dot, cmd}
    recover  {t, ev, proc, dot, ballot}
    end      {t, ev, status, stuck}
"""

import json
from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, Optional, Set

from .core import Command, Dot, dots_from_list, message_from_dict


class TraceFormatError(ValueError):
    """
    trace 文件格式错误。

    Attributes:
        line: 出错的行号（从 1 开始；截断时为文件末尾行号）
    """

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"第 {line} 行: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


EVENT_KINDS = ('start', 'send', 'deliver', 'crash', 'invoke', 'response',
               'collect', 'commit', 'execute', 'recover', 'end')

# 每种事件必须携带的字段
REQUIRED_FIELDS = {
    'start': ('config',),
    'send': ('id', 'src', 'dst', 'msg'),
    'deliver': ('id', 'src', 'dst'),
    'crash': ('proc',),
    'invoke': ('proc', 'dot', 'cmd'),
    'response': ('proc', 'dot', 'value'),
    'collect': ('proc', 'dot', 'acks', 'union', 'proposal', 'path', 'matching'),
    'commit': ('proc', 'dot', 'cmd', 'deps', 'path', 'ballot'),
    'execute': ('proc', 'batch', 'dot', 'cmd'),
    'recover': ('proc', 'dot', 'ballot'),
    'end': ('status', 'stuck'),
}

# end 事件的状态
STATUS_QUIESCENT = 'quiescent'
STATUS_HORIZON = 'horizon'
STATUS_STALLED = 'stalled'


def dumps_event(event: Dict[str, Any]) -> str:
    return json.dumps(event, ensure_ascii=False, separators=(',', ':'))


def _validate_event(event: Dict[str, Any]) -> None:
    """
    检查事件携带其类型所需的字段且各字段可以解码。

    Raises:
        ValueError: 缺少字段或字段内容不合法
    """
    kind = event['ev']
    missing = [name for name in REQUIRED_FIELDS[kind] if name not in event]
    if missing:
        raise ValueError(f"{kind} 事件缺少字段: {', '.join(missing)}")
    try:
        if kind == 'start' and not isinstance(event['config'], dict):
            raise ValueError("config 应为 JSON 对象")
        if 'dot' in event:
            Dot.parse(event['dot'])
        if 'cmd' in event:
            Command.from_dict(event['cmd'])
        if kind == 'send':
            if not isinstance(event['msg'], dict):
                raise ValueError("msg 应为 JSON 对象")
            message_from_dict(event['msg'])
        for name in ('deps', 'union', 'proposal', 'stuck'):
            if name in event:
                dots_from_list(event[name])
        if kind == 'collect':
            for deps in event['acks'].values():
                dots_from_list(deps)
    except (TypeError, AttributeError, KeyError) as e:
        raise ValueError(f"{kind} 事件字段不合法: {e}")


class Trace:
    """
    有序事件列表。

    Example:
        >>> trace = Trace()
        >>> trace.record(0, 'start', config={'n': 3})
        >>> trace.record(5, 'end', status='quiescent', stuck=[])
        >>> len(trace)
        2
    """

    def __init__(self, events: Optional[List[Dict[str, Any]]] = None):
        self.events: List[Dict[str, Any]] = events if events is not None else []

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Dict[str, Any]]:
        return iter(self.events)

    def __repr__(self) -> str:
        return f"Trace(events={len(self.events)}, status={self.status!r})"

    def record(self, t: int, ev: str, **fields) -> Dict[str, Any]:
        event = {'t': t, 'ev': ev}
        event.update(fields)
        self.events.append(event)
        return event

    def of_kind(self, *kinds: str) -> Iterator[Dict[str, Any]]:
        return (e for e in self.events if e['ev'] in kinds)

    # ============ 元信息 ============

    @property
    def config(self) -> Dict[str, Any]:
        if self.events and self.events[0]['ev'] == 'start':
            return self.events[0]['config']
        return {}

    @property
    def n(self) -> int:
        return int(self.config.get('n', 0))

    @property
    def f(self) -> int:
        return int(self.config.get('f', 0))

    @property
    def nfr_reads(self) -> bool:
        return bool(self.config.get('flags', {}).get('nfrReads', False))

    @property
    def conflict_mode(self) -> str:
        return self.config.get('flags', {}).get('conflictMode', 'read-aware')

    @property
    def status(self) -> Optional[str]:
        if self.events and self.events[-1]['ev'] == 'end':
            return self.events[-1]['status']
        return None

    @property
    def crashed(self) -> Set[int]:
        return {e['proc'] for e in self.of_kind('crash')}

    # ============ 序列化 ============

    def dumps(self) -> str:
        return ''.join(dumps_event(e) + '\n' for e in self.events)

    def save(self, path: str) -> None:
        with open(path, 'w', encoding='utf-8', newline='\n') as fp:
            for event in self.events:
                fp.write(dumps_event(event))
                fp.write('\n')

    @classmethod
    def loads(cls, text: str) -> 'Trace':
        """
        解析 JSONL 文本。

        Raises:
            TraceFormatError: 行不是合法 JSON、缺少字段、时间倒退、
                              缺少 start 或缺少结尾的 end 事件
        """
        events: List[Dict[str, Any]] = []
        last_t = 0
        line_no = 0
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError as e:
                raise TraceFormatError(f"不是合法的 JSON: {e.msg}", line_no)
            if not isinstance(event, dict):
                raise TraceFormatError("事件应为 JSON 对象", line_no)
            t = event.get('t')
            if isinstance(t, bool) or not isinstance(t, int):
                raise TraceFormatError(f"缺少整数时间戳 t: {line[:80]}", line_no)
            if event.get('ev') not in EVENT_KINDS:
                raise TraceFormatError(f"未知的事件类型: {event.get('ev')!r}", line_no)
            try:
                _validate_event(event)
            except ValueError as e:
                raise TraceFormatError(str(e), line_no)
            if t < last_t:
                raise TraceFormatError(f"时间戳倒退: {t} < {last_t}", line_no)
            if not events and event['ev'] != 'start':
                raise TraceFormatError("第一个事件必须是 start", line_no)
            if events and events[-1]['ev'] == 'end':
                raise TraceFormatError("end 事件之后还有内容", line_no)
            last_t = t
            events.append(event)
        if not events:
            raise TraceFormatError("trace 为空", line_no or None)
        if events[-1]['ev'] != 'end':
            raise TraceFormatError("trace 被截断（缺少 end 事件）", line_no)
        return cls(events)

    @classmethod
    def load(cls, path: str) -> 'Trace':
        try:
            with open(path, 'rb') as fp:
                raw = fp.read()
        except FileNotFoundError:
            raise TraceFormatError(f"trace 文件不存在: {path}")
        try:
            text = raw.decode('utf-8')
        except UnicodeDecodeError as e:
            line = raw.count(b'\n', 0, e.start) + 1
            raise TraceFormatError(f"不是合法的 UTF-8 文本: {e.reason}", line)
        return cls.loads(text)


# ============ 客户端历史 ============

@dataclass(frozen=True)
class Operation:
    """
    一次客户端调用。

    Attributes:
        proc: 调用进程
        dot: 分配的 Dot
        cmd: 命令
        invoked: invoke 事件的位置（trace 下标，作为逻辑时间）
        responded: response 事件的位置；未应答时为 None
        result: 应答值
    """

    proc: int
    dot: Dot
    cmd: Command
    invoked: int
    responded: Optional[int] = None
    result: Optional[str] = None

    @property
    def complete(self) -> bool:
        return self.responded is not None

    @property
    def key(self) -> str:
        return self.cmd.key

    def __str__(self) -> str:
        status = f"-> {self.result!r}" if self.complete else "(pending)"
        return f"{self.cmd}@p{self.proc}[{self.invoked},{self.responded}] {status}"


def extract_history(trace: Trace) -> List[Operation]:
    """
    按 invoke 顺序提取客户端操作，用 trace 下标作为实时顺序的时间戳。
    """
    invoked: Dict[tuple, Dict[str, Any]] = {}
    order: List[tuple] = []
    for index, event in enumerate(trace.events):
        if event['ev'] == 'invoke':
            ident = (event['proc'], event['dot'])
            invoked[ident] = {'proc': event['proc'], 'dot': Dot.parse(event['dot']),
                              'cmd': Command.from_dict(event['cmd']), 'invoked': index}
            order.append(ident)
        elif event['ev'] == 'response':
            ident = (event['proc'], event['dot'])
            if ident in invoked:
                invoked[ident]['responded'] = index
                invoked[ident]['result'] = event['value']
    return [Operation(**invoked[ident]) for ident in order]


def commit_payload(event: Dict[str, Any]) -> tuple:
    """commit 事件或 MCommit 消息的 (cmd, deps) 规范形式。"""
    return (Command.from_dict(event['cmd']), dots_from_list(event['deps']))
