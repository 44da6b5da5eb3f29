"""Build script: compiles the optional Sinkhorn kernel extension.

The package works without the extension (a NumPy fallback is selected at
import time), so the extension is marked optional and any build failure is
tolerated.
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
                "selflab._kernels._sinkhorn_cy",
                ["src/selflab/_kernels/_sinkhorn_cy.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
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
