import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("J1J2_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # pure-Python fallback is used at runtime
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "j1j2anneal._kernels",
                    ["src/j1j2anneal/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no -ffast-math: both backends must round identically
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
