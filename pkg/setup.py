"""Build script for the optional compiled scan kernel.

The package works without the extension (a pure-Python twin of the kernel is
selected at import time); the extension exists because the candidate-window
scan dominates Monte Carlo runtime.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "nipt._scan",
                ["src/nipt/_scan.pyx"],
                # -ffp-contract=off: the pure-Python fallback must reproduce the
                # kernel's float results bit for bit, so FMA fusion is disabled.
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
