import sys

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

if sys.platform == "win32":
    compile_args = ["/O2"]
else:
    # The extension is always compiled on the machine it runs on (there is a
    # pure-python fallback when no compiler is available), so native tuning
    # is safe and lets the kernels use whatever SIMD the host offers.
    compile_args = ["-O3", "-march=native", "-funroll-loops"]

extensions = [
    Extension(
        "vecoffload._backend._fast",
        ["src/vecoffload/_backend/_fast.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=compile_args,
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
