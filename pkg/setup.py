"""Build hook for the optional Cython kernels.

The package works without them: ``lsmo.kernels`` falls back to numpy
implementations when the extension is missing.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("LSMO_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "lsmo.kernels._ckernels",
                    ["src/lsmo/kernels/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
