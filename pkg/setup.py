"""Build script for the optional compiled kernels.

The Cython extension is built when Cython and a C compiler are available;
otherwise the package installs without it and uses the numpy fallback.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("BBMMED_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        extensions = [
            Extension(
                "bbmmed._kernels",
                ["src/bbmmed/_kernels.pyx"],
                include_dirs=[np.get_include()],
                # no -ffast-math / -march=native: keep IEEE semantics so the
                # compiled path agrees with the numpy fallback
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ]
        ext_modules = cythonize(
            extensions,
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
