"""Online chain matching for altruistic-donor kidney exchange on random
compatibility graphs: simulator, matching policies, path search, drift-walk
bounds and experiment harness."""

from .model import SimState
from .oracle import EdgeOracle

__all__ = ["EdgeOracle", "SimState"]
__version__ = "0.1.0"
