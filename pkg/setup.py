"""Build script: compiles the native kernel extension when Cython and a C
toolchain are available. The extension is optional; without it the package
falls back to the pure-numpy kernels at import time."""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "sriodom.kernels._native",
                sources=["src/sriodom/kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # fp-contract off keeps convolution bit-identical to the
                # numpy backend (no FMA fusing of the tap accumulation).
                extra_compile_args=["-O3", "-ffp-contract=off"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
