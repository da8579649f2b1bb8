"""Build script for the optional compiled kernels.

The hot path (single-state MLP forwards inside episode rollouts) has a
Cython implementation in ``fleetptc.nn._fastmlp``.  The package works
without it: if the extension cannot be built or imported, a pure-numpy
fallback is selected at import time (see ``fleetptc.nn.backend``).
"""

import sys

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build extensions best-effort; a failed compile is not fatal."""

    def run(self):
        try:
            super().run()
        except Exception as err:  # compiler missing, etc.
            print(f"warning: skipping compiled kernels ({err}); "
                  "pure-numpy fallback will be used", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as err:
            print(f"warning: could not build {ext.name} ({err}); "
                  "pure-numpy fallback will be used", file=sys.stderr)


def make_extensions():
    from Cython.Build import cythonize

    ext = Extension(
        "fleetptc.nn._fastmlp",
        sources=["src/fleetptc/nn/_fastmlp.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(
    ext_modules=make_extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
