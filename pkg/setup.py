import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# Built as optional: if compilation fails the package falls back to the
# numpy kernels in gnnuplift._kernels._pykernels.
extensions = [
    Extension(
        "gnnuplift._kernels._ckernels",
        ["src/gnnuplift/_kernels/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # no -ffast-math / FMA contraction: results must match the fallback bitwise
        extra_compile_args=["-O3", "-ffp-contract=off"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
)
