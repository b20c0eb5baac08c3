"""Online surge-dynamics identification for small surface vehicles."""

from surgeid.config import EngineConfig, RunConfig, load_config
from surgeid.engine import PredictionRecord, StreamEngine
from surgeid.surge import SurgeParams, ThrustParams

__all__ = ["EngineConfig", "RunConfig", "load_config", "PredictionRecord", "StreamEngine",
           "SurgeParams", "ThrustParams"]
__version__ = "0.1.0"
