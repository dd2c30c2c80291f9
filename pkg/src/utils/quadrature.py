"""
求积工具 - 分级 Gauss-Legendre 网格
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy import special


@lru_cache(maxsize=64)
def gauss_legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """[-1, 1] 上的 Gauss-Legendre 节点与权重"""
    nodes, weights = special.roots_legendre(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def graded_edges(a: float, b: float, n_panels: int, grading: float,
                 two_sided: bool = False) -> np.ndarray:
    """向端点加密的分段边界, 单侧加密到 a 或双侧加密到 a 和 b"""
    s = np.linspace(0.0, 1.0, n_panels + 1)
    if two_sided:
        g = np.where(s <= 0.5,
                     0.5 * (2.0 * s) ** grading,
                     1.0 - 0.5 * (2.0 * (1.0 - s)) ** grading)
    else:
        g = s ** grading
    edges = a + (b - a) * g
    edges[0], edges[-1] = a, b
    return edges


def composite_gauss_legendre(edges: np.ndarray, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """每段上放置 order 个节点的复合 Gauss-Legendre 规则"""
    ref_nodes, ref_weights = gauss_legendre(order)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    nodes = (mid[:, None] + half[:, None] * ref_nodes[None, :]).ravel()
    weights = (half[:, None] * ref_weights[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True)
class TimeMesh:
    """时间积分网格"""

    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.nodes)


def graded_time_mesh(t: float, T: float, n_nodes: int, grading: float = 2.0,
                     order: int = 2) -> TimeMesh:
    """双侧分级网格, 节点聚集在 t 和 T 附近以吸收端点可积奇性"""
    n_panels = max(n_nodes // order, 1)
    edges = graded_edges(t, T, n_panels, grading, two_sided=True)
    nodes, weights = composite_gauss_legendre(edges, order)
    return TimeMesh(nodes=nodes, weights=weights)


def interval_gauss_legendre(a: float, b: float, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """单个区间上的 Gauss-Legendre 规则"""
    ref_nodes, ref_weights = gauss_legendre(order)
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * ref_nodes, half * ref_weights


def frequency_rule(p_max: float, n_panels: int, order: int = 16,
                   grading: float = 3.0) -> Tuple[np.ndarray, np.ndarray]:
    """[0, p_max] 上向原点加密的频率求积规则 (|p|^α 在原点不光滑)"""
    edges = graded_edges(0.0, p_max, n_panels, grading)
    return composite_gauss_legendre(edges, order)


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    """均匀格点梯形权重"""
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w
