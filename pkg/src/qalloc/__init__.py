"""Deep-Q-learning portfolio weight allocation and backtesting."""

from qalloc.config import Config, SynthConfig
from qalloc.weights import Regime, WeightVector

__version__ = "0.1.0"
__all__ = ["Config", "Regime", "SynthConfig", "WeightVector", "__version__"]
