"""Build script for the optional Cython fixed-point kernel.

The package works without the extension (a NumPy fallback is selected at
import time); building it just makes dense GDM density grids faster.
"""
import os

from setuptools import Extension, setup


def _extensions():
    if os.environ.get("CORRLSS_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "corrlss._gdm_kernels._fixed_point",
        sources=["src/corrlss/_gdm_kernels/_fixed_point.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=_extensions())
