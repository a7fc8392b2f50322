"""
kvs 模块测试

测试键值状态机、冲突关系与交换性的一致性，以及调用/交付流程。
"""
from itertools import product

import pytest
from hypothesis import given, strategies as st

from atlas_smr.core import NOOP, Dot, conflict, get, is_read_star, put
from atlas_smr.executor import ExecutionError
from atlas_smr.kvs import ACK, EMPTY, DuplicateInvocationError, KvState, ReplicatedKvs, apply


KEYS = ['a', 'b', 'c']
VALUES = ['0', '1']

# 小宇宙：3 个 key、2 个值上的全部 Get / Put
UNIVERSE = [get(k) for k in KEYS] + [put(k, v) for k in KEYS for v in VALUES]

# 全部可能的初始状态（每个 key 未写或写入某个值）
STATES = [
    KvState({k: v for k, v in zip(KEYS, values) if v is not None})
    for values in product([None] + VALUES, repeat=len(KEYS))
]


# ============ 状态机测试 ============

class TestApply:
    """测试状态机 τ"""

    def test_put_then_get(self):
        """测试写后读"""
        state, reply = apply(KvState(), put('k', '7'))
        assert reply == ACK
        state, reply = apply(state, get('k'))
        assert reply == '7'

    def test_get_missing_key(self):
        """测试读未写过的 key 返回空值"""
        _, reply = apply(KvState(), get('k'))
        assert reply is EMPTY

    def test_state_is_immutable(self):
        """测试执行不修改原状态"""
        before = KvState({'k': '1'})
        after, _ = apply(before, put('k', '2'))
        assert before.get('k') == '1'
        assert after.get('k') == '2'

    def test_noop_rejected(self):
        """测试 Noop 不交付给状态机"""
        with pytest.raises(ValueError):
            apply(KvState(), NOOP)


# ============ 冲突关系一致性测试 ============

class TestConflictSoundness:
    """测试冲突关系相对状态机的正确性"""

    def test_non_conflicting_commands_commute(self):
        """测试不冲突的命令交换顺序后状态和应答都相同"""
        for state, c, d in product(STATES, UNIVERSE, UNIVERSE):
            if conflict(c, d):
                continue
            s1, rc1 = apply(state, c)
            s1, rd1 = apply(s1, d)
            s2, rd2 = apply(state, d)
            s2, rc2 = apply(s2, c)
            assert s1 == s2, (state, c, d)
            assert (rc1, rd1) == (rc2, rd2), (state, c, d)

    def test_read_star_transitive(self):
        """测试 Read* 命令与两个写冲突时，这两个写也冲突"""
        writes = [c for c in UNIVERSE if c.is_write]
        for r in filter(is_read_star, UNIVERSE):
            for d, e in product(writes, writes):
                if conflict(r, d) and conflict(r, e):
                    assert conflict(d, e)

    @given(st.sampled_from(UNIVERSE), st.sampled_from(UNIVERSE), st.integers(0, len(STATES) - 1))
    def test_conflicting_puts_order_matters(self, c, d, index):
        """测试同 key 不同值的两个 Put 顺序可观察"""
        state = STATES[index]
        if not (c.is_write and d.is_write and c.key == d.key and c.value != d.value):
            return
        s1, _ = apply(apply(state, c)[0], d)
        s2, _ = apply(apply(state, d)[0], c)
        assert s1 != s2
        assert conflict(c, d)


# ============ 通用构造测试 ============

class TestReplicatedKvs:
    """测试调用与交付"""

    def make(self):
        submitted = []

        def submit(cmd):
            submitted.append(cmd)
            return Dot(1, len(submitted))

        return ReplicatedKvs(1, submit), submitted

    def test_invoke_then_deliver(self):
        """测试本地交付后 Future 完成"""
        app, submitted = self.make()
        cmd = put('k', 'v', 1, '1.0.0')
        fut = app.invoke(cmd)
        assert submitted == [cmd]
        assert not fut.done()
        assert app.is_pending('1.0.0')

        assert app.on_deliver(Dot(1, 1), cmd) == ACK
        assert fut.result() == ACK
        assert not app.is_pending('1.0.0')
        assert app.responses == {'1.0.0': ACK}
        assert app.log == [cmd]

    def test_remote_command_applied(self):
        """测试其他进程发起的命令只执行不应答"""
        app, _ = self.make()
        app.on_deliver(Dot(2, 1), put('k', 'v', 2, '2.0.0'))
        fut = app.invoke(get('k', 1, '1.0.0'))
        app.on_deliver(Dot(1, 1), get('k', 1, '1.0.0'))
        assert fut.result() == 'v'
        assert '2.0.0' not in app.responses

    def test_duplicate_invocation(self):
        """测试同一 rid 调用两次"""
        app, _ = self.make()
        app.invoke(put('k', 'v', 1, '1.0.0'))
        with pytest.raises(DuplicateInvocationError):
            app.invoke(put('k', 'v', 1, '1.0.0'))

    def test_duplicate_delivery(self):
        """测试同一命令交付两次"""
        app, _ = self.make()
        cmd = put('k', 'v', 2, '2.0.0')
        app.on_deliver(Dot(2, 1), cmd)
        with pytest.raises(ExecutionError):
            app.on_deliver(Dot(2, 1), cmd)

    def test_noop_cancels_invocation(self):
        """测试命令以 Noop 执行时放弃调用"""
        app, _ = self.make()
        fut = app.invoke(put('k', 'v', 1, '1.0.0'))
        assert app.pending_count == 1
        assert app.on_noop(Dot(1, 1)) == '1.0.0'
        assert fut.cancelled()
        assert app.pending_count == 0
        assert app.on_noop(Dot(1, 1)) is None
        assert app.on_noop(Dot(3, 1)) is None
