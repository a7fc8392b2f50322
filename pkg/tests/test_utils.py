"""
utils 模块测试

测试退避、CSV 导出和快照。
"""
import csv

import pytest

from atlas_smr.core import Dot
from atlas_smr.utils import _clean_value, backoff_delay, load_snapshot, save_snapshot, to_csv


# ============ backoff_delay 测试 ============

class TestBackoffDelay:
    """测试虚拟时间上的指数退避"""

    def test_doubles_until_cap(self):
        """测试翻倍直到上限"""
        assert [backoff_delay(i, 100, 500) for i in range(5)] == [100, 200, 400, 500, 500]

    def test_custom_factor(self):
        """测试退避因子"""
        assert backoff_delay(2, 10, 10000, backoff_factor=3) == 90

    def test_large_attempt(self):
        """测试很大的重试次数不会溢出"""
        assert backoff_delay(10 ** 6, 1, 64) == 64

    def test_negative_attempt(self):
        """测试负数重试次数"""
        with pytest.raises(ValueError):
            backoff_delay(-1, 100, 500)


# ============ _clean_value 测试 ============

class TestCleanValue:
    """测试字段值清理"""

    @pytest.mark.parametrize("value,expected", [
        (None, ''),
        ('text', 'text'),
        (3, '3'),
        (0.5, '0.5'),
        (1 / 3, '0.333333'),
        ({'a': 1}, '{"a": 1}'),
        (['ρ'], '["ρ"]'),
    ])
    def test_values(self, value, expected):
        assert _clean_value(value) == expected


# ============ to_csv 测试 ============

class TestToCsv:
    """测试 CSV 导出"""

    def test_basic_export(self, tmp_path, capsys):
        """测试基本导出与列顺序"""
        path = tmp_path / 'sub' / 'sweep.csv'
        rows = [{'n': 5, 'f': 1, 'fast_path_ratio': 1.0},
                {'n': 5, 'f': 2, 'fast_path_ratio': None}]
        to_csv(rows, str(path), ['n', 'f', 'fast_path_ratio'])

        with open(path, encoding='utf-8-sig') as fp:
            reader = csv.DictReader(fp)
            assert reader.fieldnames == ['n', 'f', 'fast_path_ratio']
            read = list(reader)
        assert read[0] == {'n': '5', 'f': '1', 'fast_path_ratio': '1'}
        assert read[1]['fast_path_ratio'] == ''
        assert '2 行' in capsys.readouterr().out

    def test_empty_list(self, tmp_path):
        """测试空列表只写表头"""
        path = tmp_path / 'empty.csv'
        to_csv([], str(path), ['n'], verbose=False)
        assert path.read_text(encoding='utf-8-sig') == 'n\n'


# ============ 快照测试 ============

class TestSnapshot:
    """测试 dill 快照"""

    def test_save_and_load(self, tmp_path):
        """测试保存与加载"""
        path = str(tmp_path / 'state.pkl')
        state = {'stores': {1: {'x': 'b'}}, 'logs': {1: [Dot(1, 1), Dot(4, 1)]}}
        save_snapshot(state, path, verbose=False)
        assert load_snapshot(path) == state

    def test_load_missing(self, tmp_path, capsys):
        """测试文件不存在"""
        assert load_snapshot(str(tmp_path / 'nope.pkl')) is None
        assert '快照文件不存在' in capsys.readouterr().out
