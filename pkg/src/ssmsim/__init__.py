"""Self-sustainable metasurface (SSM) assisted indoor mmWave simulator."""

from .model import ScenarioConfig

__all__ = ["ScenarioConfig"]
__version__ = "0.1.0"
