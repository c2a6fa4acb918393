import os

import numpy as np
from setuptools import Extension, setup

# The compiled kernel is optional: without Cython (or with GAUSSCONJ_NO_EXT=1)
# the package installs pure-Python and falls back at import time.
ext_modules = []
if not os.environ.get("GAUSSCONJ_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        extensions = [
            Extension(
                "gaussconj._kernels",
                ["src/gaussconj/_kernels.pyx"],
                include_dirs=[np.get_include()],
                # no FMA contraction: results must match the numpy fallback bit for bit
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ]
        ext_modules = cythonize(
            extensions,
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
