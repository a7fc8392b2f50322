"""
带种子的整体验收测试

默认使用较少的种子；设置 ATLAS_SMR_FULL_SUITE=1 运行完整规模。
"""
import itertools
import os

import pytest

from atlas_smr.checkers import VERDICT_PASS, check_matching_oracle, run_all_checks
from atlas_smr.sim_config import sim_config_from_dict
from atlas_smr.simulator import run
from atlas_smr.summary import summarize
from atlas_smr.trace import STATUS_QUIESCENT

FULL_SUITE = os.environ.get('ATLAS_SMR_FULL_SUITE') == '1'


def seeds(reduced, full):
    return list(range(1, (full if FULL_SUITE else reduced) + 1))


def workload_config(n, f, seed, rate, crashes=0, pruning=False, nfr=False, commands=None, **extra):
    doc = {
        'n': n,
        'f': f,
        'seed': seed,
        'latency': 'uniform(50)',
        'jitter': 20,
        'recoveryTimeout': 1000,
        'crashes': [{'proc': n - i, 'at': 150 * (i + 1)} for i in range(crashes)],
        'workload': {
            'clientsPerProcess': 2,
            'commandsPerClient': commands or (20 if FULL_SUITE else 6),
            'conflictRate': rate,
            'readRatio': 0.3,
        },
        'flags': {'slowPathPruning': pruning, 'nfrReads': nfr},
    }
    doc.update(extra)
    return sim_config_from_dict(doc)


# ============ f=1 快速路径 ============

class TestFastPathWithOneFailure:
    """f=1 时总是走快速路径"""

    @pytest.mark.parametrize("n", [3, 5])
    @pytest.mark.parametrize("rate", [0.0, 0.1, 0.5, 1.0])
    def test_ratio_is_one(self, n, rate):
        for seed in seeds(3, 20):
            summary = summarize(run(workload_config(n, 1, seed, rate)))
            assert summary.fast_path_ratio == 1.0, (n, rate, seed)

    @pytest.mark.parametrize("f", [1, 2])
    def test_no_conflicts_is_fast(self, f):
        """测试没有冲突时任何 f 都走快速路径"""
        summary = summarize(run(workload_config(5, f, 1, 0.0)))
        assert summary.fast_path_ratio == 1.0


# ============ 不变式套件 ============

INVARIANT_CELLS = [
    (n, f, crashes, rate, pruning, nfr)
    for n, f in [(3, 1), (5, 1), (5, 2), (7, 2), (7, 3)]
    for crashes in range(f + 1)
    for rate in (0.0, 0.3, 1.0)
    for pruning, nfr in [(False, False), (True, True)]
]


class TestInvariantSuite:
    """测试所有安全性检查在随机运行上通过"""

    @pytest.mark.parametrize("n,f,crashes,rate,pruning,nfr", INVARIANT_CELLS)
    def test_checks_pass(self, n, f, crashes, rate, pruning, nfr):
        for seed in seeds(1, 7):
            config = workload_config(n, f, seed, rate, crashes, pruning, nfr)
            trace = run(config)
            report = run_all_checks(trace)
            assert report.ok, (config.to_dict(), report.to_dict())
            assert report['fast_path_recoverability'].verdict == VERDICT_PASS


# ============ 快速路径条件与应答相同 ============

class TestComparisonWithMatchingReplies:
    """快速路径条件比"应答完全相同"更宽松"""

    def test_more_fast_paths_than_matching(self):
        """测试 n=5, f=2, ρ=1 时快速路径比例严格高于应答相同的比例"""
        fast = matching = 0
        for seed in seeds(5, 20):
            trace = run(workload_config(5, 2, seed, 1.0, commands=10))
            assert check_matching_oracle(trace).ok
            summary = summarize(trace)
            assert summary.fast_path_ratio >= summary.oracle_ratio
            decided = summary.commands_committed
            fast += summary.fast_path_ratio * decided
            matching += summary.oracle_ratio * decided
        assert fast > matching


# ============ 恢复与活性 ============

class TestRecoveryLiveness:
    """崩溃不超过 f 时所有命令在存活进程上执行"""

    @pytest.mark.parametrize("n,f", [(3, 1), (5, 2)])
    def test_crashes_up_to_f(self, n, f):
        for seed in seeds(2, 10):
            trace = run(workload_config(n, f, seed, 0.5, crashes=f))
            assert trace.status == STATUS_QUIESCENT
            report = run_all_checks(trace)
            assert report['liveness'].verdict == VERDICT_PASS
            assert report.ok

    def test_forced_crashes_keep_safety(self):
        """测试崩溃超过 f 时安全性仍然成立"""
        config = workload_config(5, 1, 3, 0.5, crashes=3, forceCrashes=True, horizon=30000)
        report = run_all_checks(run(config))
        assert report.ok


# ============ 确定性 ============

class TestDeterminism:
    """同一配置与种子得到字节相同的 trace"""

    @pytest.mark.parametrize("n,f,rate", list(itertools.product([3, 5], [1, 2], [0.0, 1.0])))
    def test_byte_identical(self, n, f, rate):
        if f > (n - 1) // 2:
            pytest.skip("f 超过 ⌊(n−1)/2⌋")
        config = workload_config(n, f, 42, rate, crashes=1)
        assert run(config).dumps() == run(config).dumps()
