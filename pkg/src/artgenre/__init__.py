"""Style transfer, classical descriptors and domain-transfer experiments
for painting genre recognition."""

from ._kernels import BACKEND as kernel_backend
from .image import Image

__version__ = "0.1.0"

__all__ = ["Image", "kernel_backend", "__version__"]
