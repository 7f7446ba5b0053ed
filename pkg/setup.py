"""Build the optional compiled kernels; the package falls back to numpy without them."""

import os

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:
    pass
else:
    npy_random_lib = os.path.join(os.path.dirname(np.__file__), "random", "lib")
    ext = Extension(
        "diamondlab._ckernels",
        ["src/diamondlab/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[npy_random_lib],
        libraries=["npyrandom", "m"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    ext_modules = cythonize([ext], compiler_directives={"language_level": 3})

setup(ext_modules=ext_modules)
