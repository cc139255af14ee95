"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension; when it is missing
the pure NumPy backend is selected at import time (see liftseg._kernels).
"""
import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the native kernels if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            warnings.warn(f"native kernel build skipped: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(
                f"building {ext.name} failed; the NumPy backend will be "
                f"used instead: {exc}"
            )


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        warnings.warn(f"native kernel build skipped: {exc}")
        return []
    ext = Extension(
        "liftseg._kernels._native",
        sources=["src/liftseg/_kernels/_native.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
