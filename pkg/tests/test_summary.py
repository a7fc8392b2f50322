"""
summary 模块测试

测试运行统计和扫参。
"""
from unittest.mock import patch

from atlas_smr.checkers import run_all_checks
from atlas_smr.sim_config import sim_config_from_dict
from atlas_smr.simulator import run
from atlas_smr.summary import SWEEP_FIELDS, RunSummary, summarize, sweep, sweep_cells


# ============ RunSummary 测试 ============

class TestSummarize:
    """测试从 trace 计算统计"""

    def test_fixture_counts(self, make_fixture_config):
        """测试固定场景：一个两跳、一个四跳"""
        trace = run(make_fixture_config())
        summary = summarize(trace, run_all_checks(trace))
        assert summary.commands_submitted == 2
        assert summary.commands_committed == 2
        assert summary.commands_executed == 2
        assert summary.fast_path_ratio == 0.5
        assert summary.oracle_ratio == 0.0
        assert sorted(summary.commit_latencies) == [20, 40]
        assert summary.mean_commit_latency == 30.0
        assert summary.latency_histogram == {20: 1, 40: 1}
        assert summary.delay_histogram == {2: 1, 4: 1}
        assert summary.recovery_count == 0
        assert summary.checks['agreement'] == 'pass'
        assert summary.status == 'quiescent'

    def test_bucket_width(self, make_fixture_config):
        """测试直方图桶宽"""
        summary = summarize(run(make_fixture_config()), bucket_ms=25)
        assert summary.latency_histogram == {0: 1, 25: 1}

    def test_to_dict(self, make_fixture_config):
        """测试 JSON 形式"""
        data = summarize(run(make_fixture_config())).to_dict()
        assert data['commandsSubmitted'] == 2
        assert data['commitLatencyInDelays'] == {'2': 1, '4': 1}
        assert data['config']['n'] == 5
        assert data['checks'] == {}

    def test_f1_always_fast(self):
        """测试 f=1 时所有决定都走快速路径"""
        config = sim_config_from_dict({
            'n': 5, 'f': 1, 'seed': 3,
            'workload': {'clientsPerProcess': 1, 'commandsPerClient': 4, 'conflictRate': 1.0},
        })
        summary = summarize(run(config))
        assert summary.fast_path_ratio == 1.0

    def test_empty_run(self):
        """测试没有命令的运行"""
        config = sim_config_from_dict({'workload': {'clientsPerProcess': 0}})
        summary = summarize(run(config))
        assert summary.commands_submitted == 0
        assert summary.fast_path_ratio is None
        assert summary.mean_commit_latency is None

    def test_print_summary(self, capsys):
        """测试打印"""
        RunSummary(commands_submitted=3, fast_path_ratio=1.0, oracle_ratio=0.5,
                   commit_latencies=[10]).print_summary()
        out = capsys.readouterr().out
        assert '快速路径比例: 1.000' in out
        assert '平均提交延迟: 10.0 ms' in out


# ============ 扫参测试 ============

class TestSweep:
    """测试扫参"""

    def base(self):
        return sim_config_from_dict({
            'n': 5, 'f': 2, 'seed': 1,
            'workload': {'clientsPerProcess': 1, 'commandsPerClient': 3},
            'crashes': [{'proc': 5, 'at': 10000}],
        })

    def test_cells_skip_invalid(self, capsys):
        """测试不合法的单元被跳过并提示"""
        cells = sweep_cells(self.base(), [0.0, 1.0], [1, 2], [3, 5])
        assert [(c['n'], c['f'], c['workload']['conflictRate']) for c in cells] == [
            (3, 1, 0.0), (3, 1, 1.0), (5, 1, 0.0), (5, 1, 1.0), (5, 2, 0.0), (5, 2, 1.0),
        ]
        assert cells[0]['crashes'] == []
        assert '跳过 n=3, f=2' in capsys.readouterr().out

    def test_rows(self):
        """测试每个单元一行，按网格顺序"""
        rows = sweep(self.base(), [0.0, 1.0], [1], [5], seeds=[1, 2], verbose=False)
        assert len(rows) == 2
        assert all(set(SWEEP_FIELDS) == set(row) for row in rows)
        assert [row['conflict_rate'] for row in rows] == [0.0, 1.0]
        assert rows[0]['seeds'] == 2
        assert rows[0]['fast_path_ratio'] == 1.0

    def test_parallel_uses_process_pool(self):
        """测试 workers > 1 时使用进程池"""
        with patch('atlas_smr.summary.ProcessPoolExecutor') as mock_pool:
            mock_pool.return_value.__enter__.return_value.map.side_effect = \
                lambda fn, jobs: [fn(job) for job in jobs]
            rows = sweep(self.base(), [0.0, 1.0], [1], [5], seeds=[1], workers=4, verbose=False)
        mock_pool.assert_called_once_with(max_workers=4)
        assert len(rows) == 2
