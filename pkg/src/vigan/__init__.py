"""ViGAN: a VAE/InfoGAN hybrid for attribute-conditioned image generation
and editing, with a self-contained autodiff core, trainer, CLI and API."""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
