"""
傅里叶工具 - 格点上的离散傅里叶反演
"""
import numpy as np


def frequency_grid(n_fft: int, h: float) -> np.ndarray:
    """与间距 h 的空间格点对偶的频率格点 p_j = (j - n/2)·2π/(n h)"""
    dp = 2.0 * np.pi / (n_fft * h)
    return (np.arange(n_fft) - n_fft // 2) * dp


def offset_grid(n_fft: int, h: float) -> np.ndarray:
    """空间偏移格点 v_m = (m - n/2)·h"""
    return (np.arange(n_fft) - n_fft // 2) * h


def fourier_inverse(values: np.ndarray, h: float) -> np.ndarray:
    """
    计算 (2π)^{-1} ∫ e^{ipv} G(p) dp 在 v_m = (m - n/2)h 上的值.

    values 的最后一维是 frequency_grid 上的 G(p_j). 结果为复数, 周期为 n·h.
    """
    shifted = np.fft.ifftshift(values, axes=-1)
    out = np.fft.fftshift(np.fft.ifft(shifted, axis=-1), axes=-1)
    return out / h


def next_power_of_two(n: int) -> int:
    return 1 << max(int(n) - 1, 0).bit_length()


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0
