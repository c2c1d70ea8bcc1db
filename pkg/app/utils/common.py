"""Common utilities, errors and configuration shared by every expsumlab module."""

import os
import logging
from dotenv import load_dotenv


# Load environment variables
load_dotenv()

# Setup logging
logging.basicConfig(
    level=os.getenv("EXPSUMLAB_LOG_LEVEL", "INFO").upper(),
    format="%(asctime)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger("expsumlab")

# Default run directory (overridable with EXPSUMLAB_OUT or --out)
default_out_dir = os.getenv("EXPSUMLAB_OUT", "runs")


def ensure_dir(path: str) -> str:
    """Create `path` if needed and return it."""
    os.makedirs(path, exist_ok=True)
    return path


class ExpsumLabError(Exception):
    """Base class for every error raised by the laboratory."""

    exit_code = 2


class DomainError(ExpsumLabError):
    """Argument outside the domain of a curve."""


class UnsupportedOrderError(ExpsumLabError):
    """Derivative order outside the public ladder."""


class EvaluationError(ExpsumLabError):
    """A derivative or sum evaluated to a non-finite value."""


class DegenerateInputError(ExpsumLabError):
    """Inputs that make the requested quantity degenerate (e.g. t = s)."""


class RangeError(ExpsumLabError):
    """Interval or block outside its admissible range."""


class ArgumentError(ExpsumLabError):
    """Malformed or inconsistent argument."""


class PrecisionError(ExpsumLabError):
    """Series truncation or quadrature did not converge."""


class AliasingError(ExpsumLabError):
    """Grid too coarse for an exact evaluation contract."""


class PlanError(ExpsumLabError):
    """Sampling plan violates the exactness contract."""


class ResourceError(ExpsumLabError):
    """Memory or time budget exceeded."""

    exit_code = 3


class ConfigError(ExpsumLabError):
    """Invalid experiment configuration."""
