"""Builds the optional compiled convolution kernels.

The package works without the extension (a numpy fallback is selected at
import time), so a missing compiler or Cython only costs speed.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "vigan._kernels._conv_cy",
                ["src/vigan/_kernels/_conv_cy.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level="3",
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
