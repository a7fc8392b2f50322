"""
工具设置

只影响输出位置、日志、扫参并行度和检查预算；决定模拟结果的参数在
SimConfig（JSON）中，这里的任何设置都不会改变 trace 的字节。

加载顺序（后者覆盖前者）：
    DEFAULTS → config/config.py（或 config_file 指定的文件）→ ATLAS_SMR_* 环境变量

Usage:
    from config import get_config

    settings = get_config()
    print(settings.output_dir, settings.sweep_workers)
"""
import importlib.util
import os
from typing import Any, Callable, Dict, NamedTuple, Optional


def _parse_bool(raw: str) -> bool:
    return raw.strip().lower() in ('true', '1', 'yes', 'on')


class Setting(NamedTuple):
    default: Any
    env: Optional[str]
    constant: str
    parse: Callable[[str], Any]


# ============ 设置表 ============

SETTINGS: Dict[str, Setting] = {
    'output_dir': Setting('./output', 'ATLAS_SMR_OUTPUT_DIR', 'OUTPUT_DIR', str),
    'csv_encoding': Setting('utf-8-sig', None, 'CSV_ENCODING', str),
    'sweep_workers': Setting(1, 'ATLAS_SMR_WORKERS', 'SWEEP_WORKERS', int),
    'lin_search_budget': Setting(200000, 'ATLAS_SMR_LIN_BUDGET', 'LIN_SEARCH_BUDGET', int),
    'histogram_bucket_ms': Setting(10, 'ATLAS_SMR_BUCKET_MS', 'HISTOGRAM_BUCKET_MS', int),
    'verbose': Setting(True, 'ATLAS_SMR_VERBOSE', 'VERBOSE', _parse_bool),
}

DEFAULT_SETTINGS_FILE = os.path.join(os.path.dirname(__file__), 'config.py')


class Config:
    """
    ATLAS SMR 工具设置。

    Args:
        config_file: Python 设置文件（大写常量，见 config.example.py）；
            缺省时读取 config/config.py，文件不存在则跳过
    """

    DEFAULTS = {key: s.default for key, s in SETTINGS.items()}
    ENV_MAPPING = {key: s.env for key, s in SETTINGS.items() if s.env}
    FILE_MAPPING = {s.constant: key for key, s in SETTINGS.items()}

    def __init__(self, config_file: Optional[str] = None):
        self._values: Dict[str, Any] = dict(self.DEFAULTS)
        path = config_file or DEFAULT_SETTINGS_FILE
        if os.path.exists(path):
            self._apply_module(path)
        self._apply_environment()

    def _apply_module(self, path: str) -> None:
        spec = importlib.util.spec_from_file_location("atlas_smr_settings", path)
        if spec is None or spec.loader is None:
            return
        module = importlib.util.module_from_spec(spec)
        try:
            spec.loader.exec_module(module)
        except Exception as e:
            print(f"⚠️  无法加载配置文件 {path}: {e}")
            return
        for constant, key in self.FILE_MAPPING.items():
            if hasattr(module, constant):
                self._values[key] = getattr(module, constant)

    def _apply_environment(self) -> None:
        for key, env_var in self.ENV_MAPPING.items():
            raw = os.environ.get(env_var)
            if raw is None:
                continue
            try:
                self._values[key] = SETTINGS[key].parse(raw)
            except ValueError:
                print(f"⚠️  环境变量 {env_var}={raw!r} 无法解析，已忽略")

    def get(self, key: str, default: Any = None) -> Any:
        return self._values.get(key, default)

    def set(self, key: str, value: Any) -> None:
        self._values[key] = value

    def to_dict(self) -> Dict[str, Any]:
        return dict(self._values)

    # ============ 类型化访问 ============

    @property
    def output_dir(self) -> str:
        return str(self._values['output_dir'])

    @property
    def csv_encoding(self) -> str:
        return str(self._values['csv_encoding'])

    @property
    def sweep_workers(self) -> int:
        """扫参并行进程数，至少为 1。"""
        return max(1, int(self._values['sweep_workers']))

    @property
    def lin_search_budget(self) -> int:
        return int(self._values['lin_search_budget'])

    @property
    def histogram_bucket_ms(self) -> int:
        return max(1, int(self._values['histogram_bucket_ms']))

    @property
    def verbose(self) -> bool:
        return bool(self._values['verbose'])

    def __repr__(self) -> str:
        return f"Config({self._values})"


_settings: Optional[Config] = None


def get_config() -> Config:
    """进程内共享的设置实例（首次调用时加载）。"""
    global _settings
    if _settings is None:
        _settings = Config()
    return _settings


def reset_config() -> None:
    """丢弃共享实例，下次 get_config() 重新加载。"""
    global _settings
    _settings = None
