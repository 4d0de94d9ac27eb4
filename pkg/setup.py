import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("PERTURBWALK_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "perturbwalk._kernels",
                    ["src/perturbwalk/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no FMA contraction: the tail expression must round like the numpy backend
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    language="c++",
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
