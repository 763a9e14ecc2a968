"""Dual-branch time/frequency reconstruction model for multi-node,
multi-modal sensor time series, with correlation-learned graph structure
and reconstruction-error anomaly scoring."""

__version__ = "0.1.0"

from tfad.tensor import Tensor, Tape, ParamStore  # noqa: F401
from tfad.kernels import BACKEND as WKV_BACKEND  # noqa: F401
