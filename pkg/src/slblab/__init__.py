"""Self-labeling toolkit: coupled-system analysis, interaction-time plans,
a two-ball drop simulator, an incremental retraining pipeline and a cost model.
"""
__version__ = "0.1.0"

from . import _backend

BACKEND = _backend.NAME

__all__ = ["BACKEND", "__version__"]
