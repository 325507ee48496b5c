from .errors import ConfigurationError, InputError, NHMMError, NumericalError
from .progress import ProgressTracker
from .rng import StreamFactory

__all__ = [
    "ConfigurationError",
    "InputError",
    "NHMMError",
    "NumericalError",
    "ProgressTracker",
    "StreamFactory",
]
