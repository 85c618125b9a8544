"""Build the optional Cython kernel core.

The package works without it: ``seganet._kernels`` falls back to numpy
implementations when the compiled module cannot be imported.
"""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    ext_modules = []
else:
    extensions = [
        Extension(
            "seganet._kernels._ckernels",
            ["src/seganet/_kernels/_ckernels.pyx"],
            # no FMA contraction: results must match the numpy fallback bit for bit
            extra_compile_args=["-O3", "-ffp-contract=off"],
            optional=True,
        )
    ]
    ext_modules = cythonize(
        extensions,
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
