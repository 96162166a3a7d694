"""Build script. The Cython kernel extension is optional: set
CFPORDER_SKIP_EXT=1 (or lack a working toolchain) and the package installs
with the pure-Python kernels only.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("CFPORDER_SKIP_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "cfporder._kernels_cy",
                    ["src/cfporder/_kernels_cy.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
