"""Builds the compiled kernel extension.

The package works without it (ratiopp.kernels falls back to the numpy
backend), so failure to compile only costs speed.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "ratiopp.kernels._core",
                ["src/ratiopp/kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
