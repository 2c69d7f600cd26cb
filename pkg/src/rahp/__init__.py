"""Review-guided answer helpfulness prediction.

A library and CLI covering the whole pipeline: corpus ingestion and
labeling, review-sentence retrieval, inference pre-training with
parameter transfer, supervised training, and evaluation, all built on a
small reverse-mode autodiff core.
"""

import os

# Single-threaded BLAS keeps training trajectories bit-reproducible and is
# faster at this model's matrix sizes anyway. Must happen before numpy
# first loads; a no-op if the process imported numpy already.
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

from .model import RAHPConfig, ModelParams, forward, loss  # noqa: E402
from .tensor import Tensor, backward, grad_check, no_grad, softmax_masked  # noqa: E402

__all__ = [
    "RAHPConfig",
    "ModelParams",
    "forward",
    "loss",
    "Tensor",
    "backward",
    "grad_check",
    "no_grad",
    "softmax_masked",
]

__version__ = "0.1.0"
