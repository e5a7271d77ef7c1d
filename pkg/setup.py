"""Build script for the optional compiled kernels.

The package works without the extension; if Cython or a C compiler is
missing the build falls back to the pure-Python kernels.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("SPLITFIELD_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "splitfield._kernels",
                    ["src/splitfield/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
