"""Multi-view diffusion sampling with a splat-based 3D-aware denoising loop."""

from .backend import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
