import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "wsrec._kernels",
    ["src/wsrec/_kernels.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3", "-ffp-contract=off"],
    # a failed compile leaves the pure-Python kernels in charge
    optional=True,
)

setup(ext_modules=cythonize([ext], compiler_directives={"language_level": "3"}))
