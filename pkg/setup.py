import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "cqarag._kernels",
    ["src/cqarag/_kernels.pyx"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    optional=True,  # package works on the pure fallback if the toolchain is missing
)

setup(ext_modules=cythonize([ext], language_level="3"))
