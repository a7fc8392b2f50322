"""
trace 模块测试

测试事件记录、JSONL 读写、格式错误和历史提取。
"""
import pytest

from atlas_smr.core import Dot, put
from atlas_smr.trace import (
    STATUS_QUIESCENT,
    Trace,
    TraceFormatError,
    commit_payload,
    extract_history,
)


def small_trace():
    trace = Trace()
    trace.record(0, 'start', config={'n': 3, 'f': 1, 'flags': {'nfrReads': True}})
    trace.record(0, 'invoke', proc=1, dot='p1-1', cmd=put('k', 'v', 1, '1.0.0').to_dict())
    trace.record(3, 'crash', proc=3)
    trace.record(20, 'commit', proc=1, dot='p1-1', cmd=put('k', 'v', 1, '1.0.0').to_dict(),
                 deps=['p2-1'], path='fast', ballot=0)
    trace.record(20, 'response', proc=1, dot='p1-1', value='ok')
    trace.record(20, 'end', status=STATUS_QUIESCENT, stuck=[])
    return trace


# ============ 记录与属性测试 ============

class TestTrace:
    """测试 Trace 对象"""

    def test_properties(self):
        """测试元信息属性"""
        trace = small_trace()
        assert len(trace) == 6
        assert trace.n == 3 and trace.f == 1
        assert trace.nfr_reads
        assert trace.conflict_mode == 'read-aware'
        assert trace.status == STATUS_QUIESCENT
        assert trace.crashed == {3}
        assert [e['ev'] for e in trace.of_kind('crash', 'commit')] == ['crash', 'commit']

    def test_field_order_in_output(self):
        """测试每行以 t、ev 开头，分隔符紧凑"""
        first = small_trace().dumps().splitlines()[1]
        assert first.startswith('{"t":0,"ev":"invoke","proc":1,')

    def test_save_and_load(self, tmp_path):
        """测试保存后重新读取得到相同事件"""
        trace = small_trace()
        path = tmp_path / "run.jsonl"
        trace.save(str(path))
        loaded = Trace.load(str(path))
        assert loaded.events == trace.events
        assert loaded.dumps() == trace.dumps()

    def test_commit_payload(self):
        """测试提交内容的规范形式"""
        event = small_trace().events[3]
        cmd, deps = commit_payload(event)
        assert cmd == put('k', 'v', 1, '1.0.0')
        assert deps == frozenset({Dot(2, 1)})


# ============ 格式错误测试 ============

class TestTraceFormat:
    """测试格式错误"""

    def lines(self):
        return small_trace().dumps().splitlines()

    def test_truncated(self):
        """测试缺少 end 事件"""
        text = '\n'.join(self.lines()[:-1])
        with pytest.raises(TraceFormatError) as exc:
            Trace.loads(text)
        assert exc.value.line == 5

    def test_cut_in_the_middle_of_a_line(self):
        """测试最后一行被截断"""
        lines = self.lines()
        lines[-1] = lines[-1][:10]
        with pytest.raises(TraceFormatError) as exc:
            Trace.loads('\n'.join(lines))
        assert exc.value.line == 6

    def test_time_goes_backwards(self):
        """测试时间戳倒退"""
        lines = self.lines()
        lines[2] = lines[2].replace('"t":3', '"t":-1')
        with pytest.raises(TraceFormatError) as exc:
            Trace.loads('\n'.join(lines))
        assert exc.value.line == 3

    def test_missing_start(self):
        """测试第一个事件不是 start"""
        with pytest.raises(TraceFormatError):
            Trace.loads('\n'.join(self.lines()[1:]))

    def test_unknown_event(self):
        """测试未知事件类型"""
        with pytest.raises(TraceFormatError):
            Trace.loads('{"t":0,"ev":"start","config":{}}\n{"t":1,"ev":"teleport"}\n')

    def test_content_after_end(self):
        """测试 end 之后还有事件"""
        lines = self.lines() + [self.lines()[2].replace('"t":3', '"t":30')]
        with pytest.raises(TraceFormatError):
            Trace.loads('\n'.join(lines))

    def test_empty(self):
        """测试空文件"""
        with pytest.raises(TraceFormatError):
            Trace.loads('')

    def test_missing_file(self, tmp_path):
        """测试文件不存在"""
        with pytest.raises(TraceFormatError):
            Trace.load(str(tmp_path / "nope.jsonl"))

    def test_event_missing_field(self):
        """测试事件缺少其类型需要的字段"""
        text = ('{"t":0,"ev":"start","config":{}}\n'
                '{"t":1,"ev":"send"}\n'
                '{"t":2,"ev":"end","status":"quiescent","stuck":[]}\n')
        with pytest.raises(TraceFormatError) as exc:
            Trace.loads(text)
        assert exc.value.line == 2
        assert 'msg' in str(exc.value)

    def test_commit_missing_deps(self):
        """测试 commit 缺少 deps"""
        lines = self.lines()
        lines[3] = lines[3].replace(',"deps":["p2-1"]', '')
        with pytest.raises(TraceFormatError) as exc:
            Trace.loads('\n'.join(lines))
        assert exc.value.line == 4
        assert 'deps' in str(exc.value)

    @pytest.mark.parametrize("msg", [
        '"hello"',
        '{"type":"MTeleport","dot":"p1-1"}',
        '{"type":"MCollectAck","dot":"p1-1"}',
        '{"type":"MCollectAck","dot":"nonsense","deps":[]}',
    ])
    def test_send_with_bad_message(self, msg):
        """测试 send 事件的消息无法解码"""
        text = ('{"t":0,"ev":"start","config":{}}\n'
                '{"t":1,"ev":"send","id":0,"src":1,"dst":2,"msg":' + msg + '}\n'
                '{"t":2,"ev":"end","status":"quiescent","stuck":[]}\n')
        with pytest.raises(TraceFormatError) as exc:
            Trace.loads(text)
        assert exc.value.line == 2

    def test_bad_dot_and_command(self):
        """测试 dot 或命令无法解码"""
        lines = self.lines()
        with pytest.raises(TraceFormatError) as exc:
            Trace.loads('\n'.join(lines).replace('"dot":"p1-1"', '"dot":"x"', 1))
        assert exc.value.line == 2
        with pytest.raises(TraceFormatError):
            Trace.loads('\n'.join(lines).replace('"kind":"put"', '"kind":"teleport"', 1))

    def test_invalid_utf8(self, tmp_path):
        """测试文件不是 UTF-8 文本"""
        path = tmp_path / "bad.jsonl"
        path.write_bytes(b'{"t":0,"ev":"start","config":{}}\n\xff\xfe\n')
        with pytest.raises(TraceFormatError) as exc:
            Trace.load(str(path))
        assert exc.value.line == 2


# ============ 历史提取测试 ============

class TestExtractHistory:
    """测试客户端历史提取"""

    def test_times_are_event_indices(self):
        """测试调用和应答时间取事件下标"""
        history = extract_history(small_trace())
        assert len(history) == 1
        op = history[0]
        assert (op.invoked, op.responded) == (1, 4)
        assert op.result == 'ok'
        assert op.dot == Dot(1, 1)
        assert op.key == 'k'

    def test_pending_operation(self):
        """测试未应答的调用"""
        trace = small_trace()
        del trace.events[4]
        op = extract_history(trace)[0]
        assert not op.complete
        assert 'pending' in str(op)
