"""
导出工具模块 - CSV / JSON / 二进制样本, 全部原子写入
"""
import json
import logging
import os
import struct
import tempfile
from contextlib import contextmanager
from typing import Any, Dict, Iterator, Optional, Tuple

import numpy as np
import pandas as pd

from config.config import Config
from src import __version__
from src.exceptions import ConfigurationError

# 样本文件头: 8 字节魔数 + 小端 uint64 样本数
SAMPLE_HEADER = struct.Struct('<8sQ')


@contextmanager
def atomic_open(filepath: str, mode: str = 'w') -> Iterator[Any]:
    """先写同目录临时文件, 成功后 os.replace; 失败时不留下部分文件"""
    directory = os.path.dirname(os.path.abspath(filepath))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp_', suffix=os.path.basename(filepath))
    try:
        kwargs = {} if 'b' in mode else {'encoding': 'utf-8', 'newline': ''}
        with os.fdopen(fd, mode, **kwargs) as f:
            yield f
        os.replace(tmp_path, filepath)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def _header_lines(header: Optional[Dict[str, Any]]) -> str:
    meta = {'tool': Config.TOOL_NAME, 'version': __version__}
    meta.update(header or {})
    return ''.join(f"# {key}: {value}\n" for key, value in meta.items())


def read_csv(filepath: str) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """读取带注释头的 CSV, 返回 (数据, 头部字段)"""
    if not os.path.exists(filepath):
        raise ConfigurationError(f"找不到 CSV 文件: {filepath}")
    header: Dict[str, str] = {}
    with open(filepath, 'r', encoding='utf-8') as f:
        for line in f:
            if not line.startswith('#'):
                break
            key, _, value = line[1:].partition(':')
            header[key.strip()] = value.strip()
    return pd.read_csv(filepath, comment='#'), header


def read_samples(filepath: str) -> np.ndarray:
    """读取二进制样本文件并校验魔数与样本数"""
    with open(filepath, 'rb') as f:
        raw = f.read()
    if len(raw) < SAMPLE_HEADER.size:
        raise ConfigurationError(f"样本文件过短: {filepath}")
    magic, count = SAMPLE_HEADER.unpack_from(raw)
    if magic != Config.SAMPLE_MAGIC:
        raise ConfigurationError(f"样本文件魔数不匹配: {magic!r}")
    body = np.frombuffer(raw, dtype='<f8', offset=SAMPLE_HEADER.size)
    if body.size != count:
        raise ConfigurationError(f"样本数不一致: 头部 {count}, 实际 {body.size}")
    return body.astype(float)


class ExportUtils:
    """运行产物导出器; 所有文件写入 output_dir"""

    def __init__(self, output_dir: str = Config.OUTPUT_DIR):
        self.output_dir = output_dir
        self.logger = logging.getLogger(__name__)
        os.makedirs(output_dir, exist_ok=True)

    def _path(self, filename: str) -> str:
        return os.path.join(self.output_dir, filename)

    def export_frame_csv(self, frame: pd.DataFrame, filename: str,
                         header: Optional[Dict[str, Any]] = None) -> str:
        """导出数据表, 头部为 '# key: value' 注释行"""
        filepath = self._path(filename)
        try:
            with atomic_open(filepath) as f:
                f.write(_header_lines(header))
                frame.to_csv(f, index=False, float_format=Config.CSV_FLOAT_FORMAT, lineterminator='\n')
            self.logger.info(f"CSV导出完成: {filepath}")
            return filepath
        except Exception as e:
            self.logger.error(f"CSV导出失败: {e}")
            raise

    def export_density_csv(self, grid: Any, filename: str,
                           header: Optional[Dict[str, Any]] = None) -> str:
        """导出 DensityGrid (列 t, T, y, x, value)"""
        meta = {'variable': grid.variable}
        meta.update(header or {})
        return self.export_frame_csv(grid.to_frame(), filename, meta)

    def export_json(self, data: Dict[str, Any], filename: str) -> str:
        """导出为JSON格式"""
        filepath = self._path(filename)
        try:
            with atomic_open(filepath) as f:
                json.dump(data, f, ensure_ascii=False, indent=2, sort_keys=True, default=_json_default)
                f.write('\n')
            self.logger.info(f"JSON导出完成: {filepath}")
            return filepath
        except Exception as e:
            self.logger.error(f"JSON导出失败: {e}")
            raise

    def export_samples(self, samples: Any, filename: str,
                       metadata: Optional[Dict[str, Any]] = None) -> Tuple[str, str]:
        """二进制样本文件 (小端 float64) 与同名 .json 元数据"""
        values = np.ascontiguousarray(np.asarray(samples, dtype='<f8').ravel())
        filepath = self._path(filename)
        try:
            with atomic_open(filepath, 'wb') as f:
                f.write(SAMPLE_HEADER.pack(Config.SAMPLE_MAGIC, values.size))
                f.write(values.tobytes())
            sidecar = dict(metadata or {})
            sidecar.update({'count': int(values.size), 'dtype': '<f8', 'version': __version__})
            sidecar_path = self.export_json(sidecar, f"{os.path.splitext(filename)[0]}.json")
            self.logger.info(f"样本导出完成: {filepath} ({values.size} 个)")
            return filepath, sidecar_path
        except Exception as e:
            self.logger.error(f"样本导出失败: {e}")
            raise


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"无法序列化为 JSON: {type(value).__name__}")
