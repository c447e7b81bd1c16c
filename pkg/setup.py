import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("PARETOSERVE_NO_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "paretoserve._speedups",
                    ["src/paretoserve/_speedups.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # No Cython: install with the pure-Python kernels only.
        ext_modules = []

setup(ext_modules=ext_modules)
