"""
LevyParametrix - Lévy 驱动 SDE 转移密度的参数展开数值引擎
"""

__version__ = "1.0.0"
__author__ = "LevyParametrix Team"
__description__ = "Parametrix transition densities and stability checks for Levy-driven SDEs"
