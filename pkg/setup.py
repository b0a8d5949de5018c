import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the NumPy fallback backend is used instead
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("CRIMELAB_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "crimelab.learn._ctree",
                ["src/crimelab/learn/_ctree.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # no FMA contraction: keeps results identical to the NumPy backend
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
