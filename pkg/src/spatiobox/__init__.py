"""Bell tests, local models and quantum references for boxes with rotation-angle inputs."""

from .corrfn import CorrelationFunction, FreqPair, scifi_correlation
from .jointbox import JointBox

__all__ = ["CorrelationFunction", "FreqPair", "JointBox", "scifi_correlation"]
__version__ = "0.1.0"
