"""
配置文件 - Lévy 驱动 SDE 参数展开数值引擎
"""
import os
from dotenv import load_dotenv

load_dotenv()


class Config:
    # 文件路径
    LOG_DIR = os.getenv('LEVYPX_LOG_DIR', 'logs')
    OUTPUT_DIR = os.getenv('LEVYPX_OUTPUT_DIR', os.path.join('data', 'runs'))
    EXPERIMENTS_DIR = os.path.join(os.path.dirname(__file__), 'experiments')
    DEFAULT_EXPERIMENT = os.path.join(EXPERIMENTS_DIR, 'default.json')

    # 环境变量覆盖前缀, 例如 LEVYPX__PARAMETRIX__K_MAX=6
    ENV_PREFIX = 'LEVYPX'

    # 并行配置
    MAX_WORKERS = int(os.getenv('LEVYPX_MAX_WORKERS', '4'))

    # FFT 配置
    FFT_POINTS = int(os.getenv('LEVYPX_FFT_POINTS', str(2 ** 14)))
    FFT_HALF_WIDTH_FACTOR = float(os.getenv('LEVYPX_FFT_HALF_WIDTH_FACTOR', '40'))
    FFT_PADDING = int(os.getenv('LEVYPX_FFT_PADDING', '2'))
    FREQUENCY_CUTOFF = 1e-16
    CLIP_FLOOR = -1e-9
    MASS_BAND = (0.99, 1.001)

    # 数值容差
    QUAD_EPSREL = 1e-11
    QUAD_LIMIT = 400
    POISSON_TAIL_TOL = 1e-10

    # 假设检查
    DELTA_CAP = 1.0
    DRIFT_CONSTANT = 1.0
    DYADIC_RANGE = (-10, 10)
    VALIDATION_POINTS = 41

    # 蒙特卡洛
    KDE_MIN_SAMPLES = 1000
    KDE_BANDWIDTH_FLOOR = 1e-3
    MAX_NONFINITE_FRACTION = 1e-4
    REJECTION_BUDGET = 1000
    SAMPLE_MAGIC = b'LVYSMPL1'

    # 输出
    TOOL_NAME = 'levyparametrix'
    CSV_FLOAT_FORMAT = '%.17g'
