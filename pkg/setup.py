"""Build script for the compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), but the build requires Cython and a C compiler so released
artifacts always carry the fast path.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "crtmiss.kernels._core",
        ["src/crtmiss/kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
