"""
共享的测试配置
"""
import pytest

from atlas_smr.sim_config import sim_config_from_dict


def two_conflicting_puts(pruning=False):
    """
    n=5, f=2，延迟均为 10ms、无抖动、无客户端。

    t=0 时进程 1 提交 a = Put(x)，随后进程 4 提交 b = Put(x)：
    b 在 t=20 走快速路径（依赖 {a}），a 在 t=40 走慢速路径。
    """
    return sim_config_from_dict({
        'n': 5,
        'f': 2,
        'seed': 1,
        'latency': 'uniform(10)',
        'jitter': 0,
        'workload': {'clientsPerProcess': 0},
        'flags': {'slowPathPruning': pruning},
        'script': [
            {'at': 0, 'proc': 1, 'op': 'put', 'key': 'x', 'value': 'a'},
            {'at': 0, 'proc': 4, 'op': 'put', 'key': 'x', 'value': 'b'},
        ],
    })


def small_workload(**overrides):
    """n=3, f=1 的小负载（每进程 1 个客户端 × 5 条命令）。"""
    doc = {
        'n': 3,
        'f': 1,
        'seed': 7,
        'latency': 'uniform(50)',
        'jitter': 5,
        'recoveryTimeout': 500,
        'horizon': 200000,
        'workload': {'clientsPerProcess': 1, 'commandsPerClient': 5, 'conflictRate': 0.5,
                     'readRatio': 0.3},
    }
    doc.update(overrides)
    return sim_config_from_dict(doc)


@pytest.fixture
def make_fixture_config():
    return two_conflicting_puts


@pytest.fixture
def make_workload_config():
    return small_workload
