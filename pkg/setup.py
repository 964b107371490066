"""Build script for the compiled split-search / prediction kernels.

The extension is optional at runtime: jitrisk falls back to the pure
numpy kernels in jitrisk._kernels._pure when the compiled module is
missing (see benchmarks/bench_backends.py for the speed difference).
"""

from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "jitrisk._kernels._core",
        sources=["src/jitrisk/_kernels/_core.pyx"],
        language="c++",
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
)
