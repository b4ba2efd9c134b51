import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "ldssl._kernels._labeling_cy",
                ["src/ldssl/_kernels/_labeling_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
else:
    # pure-python install; the numpy kernel backend takes over at import
    ext_modules = []

setup(ext_modules=ext_modules)
