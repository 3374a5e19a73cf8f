"""Build script for the optional compiled kernels.

The package works without them: ``odyn.kernels`` falls back to the
pure-Python implementation when ``odyn._core`` cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("ODYN_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "odyn._core",
                    ["src/odyn/_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
