import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # fallback kernel is used at runtime
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("BANDITSGD_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "banditsgd._kernel",
                ["src/banditsgd/_kernel.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
