import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "typobench._kernels._fastcore",
                ["src/typobench/_kernels/_fastcore.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
else:
    # Pure-python install still works; the numpy kernel fallback is selected
    # at import time when the extension is missing.
    extensions = []

setup(ext_modules=extensions)
