"""Build hook for the optional compiled friction kernels.

When Cython or a C compiler is unavailable the package still installs and
falls back to the numpy implementation at import time.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("DCRUPTURE_NO_EXTENSION"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "dcrupture._kernels",
                    ["src/dcrupture/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
