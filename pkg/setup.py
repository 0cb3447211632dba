"""Build the compiled transport kernels; the package falls back to numpy
when the extension is absent."""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # no compiler toolchain: pure-Python install
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("moistfem._kernels", ["src/moistfem/_kernels.pyx"], extra_compile_args=["-O3"])],
        language_level=3,
    )

setup(ext_modules=ext_modules)
