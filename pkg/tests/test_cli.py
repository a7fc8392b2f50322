"""
CLI (__main__.py) 模块测试

测试命令行接口：run / sweep / check 以及退出码。
"""
import csv
import json
import os
from unittest.mock import patch

import pytest

from atlas_smr.__main__ import (
    EXIT_CHECK_FAILED,
    EXIT_OK,
    EXIT_USAGE,
    create_parser,
    main,
)
from atlas_smr.trace import Trace


def write_config(tmp_path, doc, name='sim.json'):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding='utf-8')
    return str(path)


SMALL = {
    'n': 3,
    'f': 1,
    'seed': 5,
    'latency': 'uniform(20)',
    'workload': {'clientsPerProcess': 1, 'commandsPerClient': 3},
}


# ============ 参数解析测试 ============

class TestCreateParser:
    """测试参数解析器"""

    def test_parse_run(self):
        """测试 run 子命令参数"""
        args = create_parser().parse_args(
            ['run', '--config', 'sim.json', '--out', 't.jsonl', '--seed', '3', '--horizon', '1000'])
        assert args.command == 'run'
        assert args.config == 'sim.json'
        assert args.out == 't.jsonl'
        assert args.seed == 3
        assert args.horizon == 1000
        assert args.force_crashes is False

    def test_parse_sweep_defaults(self):
        """测试 sweep 默认网格"""
        args = create_parser().parse_args(['sweep'])
        assert args.rates == [0.0, 0.1, 0.5, 1.0]
        assert args.fs == [1, 2]
        assert args.ns == [5]
        assert args.seeds == 10

    def test_parse_check(self):
        """测试 check 子命令参数"""
        args = create_parser().parse_args(['check', 'run.jsonl', '--budget', '100'])
        assert args.trace == 'run.jsonl'
        assert args.budget == 100

    def test_parse_quiet(self):
        """测试安静模式"""
        args = create_parser().parse_args(['-q', 'check', 'run.jsonl'])
        assert args.quiet is True


# ============ main 函数测试 ============

class TestMain:
    """测试主函数"""

    def test_version(self):
        """测试版本信息"""
        assert main(['--version']) == EXIT_OK

    def test_missing_subcommand(self):
        """测试缺少子命令"""
        assert main([]) == EXIT_USAGE

    def test_unknown_argument(self):
        """测试未知参数"""
        assert main(['run', '--nope']) == EXIT_USAGE

    def test_run_and_check(self, tmp_path):
        """测试运行后检查同一 trace"""
        config = write_config(tmp_path, SMALL)
        out = str(tmp_path / 'run.jsonl')
        assert main(['-q', 'run', '--config', config, '--out', out]) == EXIT_OK

        trace = Trace.load(out)
        assert trace.config['seed'] == 5
        summary_path = str(tmp_path / 'run.summary.json')
        with open(summary_path, encoding='utf-8') as fp:
            summary = json.load(fp)
        assert summary['commandsSubmitted'] == 3
        assert summary['status'] == 'quiescent'

        assert main(['-q', 'check', out]) == EXIT_OK

    def test_run_overrides_seed(self, tmp_path):
        """测试 --seed 覆盖配置"""
        config = write_config(tmp_path, SMALL)
        out = str(tmp_path / 'run.jsonl')
        assert main(['-q', 'run', '--config', config, '--out', out, '--seed', '11']) == EXIT_OK
        assert Trace.load(out).config['seed'] == 11

    def test_run_snapshot(self, tmp_path):
        """测试保存快照"""
        config = write_config(tmp_path, SMALL)
        snapshot = tmp_path / 'state.pkl'
        out = str(tmp_path / 'run.jsonl')
        assert main(['-q', 'run', '--config', config, '--out', out, '--snapshot', str(snapshot)]) == EXIT_OK
        assert snapshot.exists()

    def test_invalid_config(self, tmp_path, capsys):
        """测试非法配置返回 2 并列出问题"""
        config = write_config(tmp_path, {'n': 3, 'f': 2})
        assert main(['run', '--config', config, '--out', str(tmp_path / 'x.jsonl')]) == EXIT_USAGE
        assert '❌ 错误' in capsys.readouterr().out

    def test_missing_config_file(self, tmp_path):
        """测试配置文件不存在"""
        assert main(['-q', 'run', '--config', str(tmp_path / 'nope.json')]) == EXIT_USAGE

    def test_crashes_beyond_f_need_flag(self, tmp_path):
        """测试崩溃数超过 f 时必须显式允许"""
        doc = dict(SMALL, crashes=[{'proc': 1, 'at': 50}, {'proc': 2, 'at': 50}], horizon=5000)
        config = write_config(tmp_path, doc)
        out = str(tmp_path / 'run.jsonl')
        assert main(['-q', 'run', '--config', config, '--out', out]) == EXIT_USAGE
        assert main(['-q', 'run', '--config', config, '--out', out, '--force-crashes']) == EXIT_OK

    def test_check_truncated_trace(self, tmp_path, capsys):
        """测试截断的 trace 返回 2"""
        config = write_config(tmp_path, SMALL)
        out = tmp_path / 'run.jsonl'
        main(['-q', 'run', '--config', config, '--out', str(out)])
        lines = out.read_text(encoding='utf-8').splitlines()
        out.write_text('\n'.join(lines[:-1]) + '\n', encoding='utf-8')

        assert main(['check', str(out)]) == EXIT_USAGE
        assert '截断' in capsys.readouterr().out

    def test_check_missing_trace(self, tmp_path):
        """测试 trace 文件不存在"""
        assert main(['-q', 'check', str(tmp_path / 'nope.jsonl')]) == EXIT_USAGE

    def test_check_event_missing_field(self, tmp_path, capsys):
        """测试缺少字段的事件返回 2 而不是崩溃"""
        path = tmp_path / 'partial.jsonl'
        path.write_text('{"t":0,"ev":"start","config":{"n":3,"f":1}}\n'
                        '{"t":1,"ev":"send"}\n'
                        '{"t":2,"ev":"end","status":"quiescent","stuck":[]}\n', encoding='utf-8')

        assert main(['check', str(path)]) == EXIT_USAGE
        assert '第 2 行' in capsys.readouterr().out

    def test_check_invalid_utf8(self, tmp_path):
        """测试非 UTF-8 的 trace 返回 2"""
        path = tmp_path / 'binary.jsonl'
        path.write_bytes(b'{"t":0,"ev":"start","config":{}}\n\xff\xfe\n')
        assert main(['-q', 'check', str(path)]) == EXIT_USAGE

    def test_check_failing_trace(self, tmp_path, make_fixture_config):
        """测试被篡改的 trace 返回 1"""
        from atlas_smr.simulator import run

        trace = run(make_fixture_config())
        for event in trace.events:
            if event['ev'] == 'execute' and event['proc'] == 5:
                event['batch'] = 0
                event['dot'] = 'p1-1'
        path = str(tmp_path / 'bad.jsonl')
        trace.save(path)
        assert main(['-q', 'check', path]) == EXIT_CHECK_FAILED

    def test_default_output_dir(self, tmp_path):
        """测试缺省输出目录来自工具设置"""
        config = write_config(tmp_path, SMALL)
        with patch('atlas_smr.__main__._setting',
                   side_effect=lambda name, default: str(tmp_path / 'out') if name == 'output_dir' else default):
            assert main(['-q', 'run', '--config', config]) == EXIT_OK
        assert os.path.exists(tmp_path / 'out' / 'trace_n3_f1_s5.jsonl')


# ============ 扫参测试 ============

class TestSweepCommand:
    """测试 sweep 子命令"""

    def test_sweep_writes_csv(self, tmp_path):
        """测试扫参写出 CSV，每个单元一行"""
        config = write_config(tmp_path, SMALL)
        out = tmp_path / 'sweep.csv'
        code = main(['-q', 'sweep', '--config', config, '--out', str(out),
                     '--rates', '0', '1', '--fs', '1', '--ns', '3', '--seeds', '2', '--workers', '1'])
        assert code == EXIT_OK
        with open(out, encoding='utf-8-sig') as fp:
            rows = list(csv.DictReader(fp))
        assert [row['conflict_rate'] for row in rows] == ['0', '1']
        assert all(row['seeds'] == '2' for row in rows)

    def test_sweep_zero_seeds(self, tmp_path):
        """测试种子数必须为正"""
        config = write_config(tmp_path, SMALL)
        assert main(['-q', 'sweep', '--config', config, '--seeds', '0']) == EXIT_USAGE
