"""Build the optional compiled kernel; the package works without it."""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("FDMEC_NO_EXTENSION"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("fdmec.sca._kernel", ["src/fdmec/sca/_kernel.pyx"],
                       include_dirs=[np.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
