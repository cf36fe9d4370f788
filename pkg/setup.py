"""Build the optional Cython kernel; the package falls back to pure Python without it."""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("METABWE_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "metabwe._kernel",
                    ["src/metabwe/_kernel.pyx"],
                    # no FMA contraction: results must match the Python backend bit for bit
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
