"""minigl: a desk-scale, CPU-parallel sampling-based GNN training testbed."""

__version__ = "0.1.0"

from . import compute, graph, idmap, memsim, sampler, schedule, trainer  # noqa: F401
from .errors import (  # noqa: F401
    CapacityError,
    ConfigError,
    FormatError,
    MiniGLError,
    NotFoundError,
    ParseError,
    ValidationError,
)
