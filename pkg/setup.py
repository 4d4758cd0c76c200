"""Build script.  The compiled kernel extension is optional: when Cython and a
C compiler are available (install with --no-build-isolation so the ambient
toolchain is visible) the hot loops run natively, otherwise the package falls
back to the pure-numpy kernels at import time."""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "peakonlab._kernels._ckernels",
                ["src/peakonlab/_kernels/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception:
    ext_modules = []

setup(ext_modules=ext_modules)
