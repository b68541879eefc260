"""Queue-aware attention models for flight-chain delay classification.

The package is self-contained on top of numpy: a small reverse-mode tensor
engine, data ingest and chain building, the model zoo, and a CLI.
"""

import os

# BLAS reads these once, when numpy is first imported; QTSIM_THREADS caps them.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, os.environ.get("QTSIM_THREADS", "1"))

from .errors import ConfigError, DataError, NumericError, QtsimError, SchemaError, ShapeError, UsageError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "QtsimError",
    "SchemaError",
    "ShapeError",
    "UsageError",
    "__version__",
]
