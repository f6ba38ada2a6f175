"""Build the optional compiled kernels in place.

Usage:
    python setup_ext.py build_ext --inplace

The package runs without this step on the numpy fallback; the extension
roughly an order of magnitude faster on the splatting and visibility
kernels (see benchmarks/bench_backends.py).
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "mvsample._core",
        sources=["src/mvsample/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": "3",
        },
    ),
)
