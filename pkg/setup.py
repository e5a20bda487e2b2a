"""Build script: compiles the optional loss-distribution kernel.

The compiled extension is a pure speed-up; the package falls back to the
Python kernel when the extension cannot be built or imported.  Set
``PARINSURE_PURE=1`` to skip compilation entirely.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None


class OptionalBuildExt(build_ext):
    """Build the extension if possible, otherwise install pure-Python."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"warning: compiled kernel skipped ({exc}); using pure-Python fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: could not build {ext.name} ({exc}); using pure-Python fallback")


extensions = []
if cythonize is not None and not os.environ.get("PARINSURE_PURE"):
    extensions = cythonize(
        [
            Extension(
                "parinsure._kernels._depril",
                ["src/parinsure/_kernels/_depril.pyx"],
                # -ffp-contract=off keeps the float semantics identical to the
                # pure-Python kernel (no fused multiply-add), so both backends
                # produce the same bits for the same inputs.
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level="3",
    )

setup(ext_modules=extensions, cmdclass={"build_ext": OptionalBuildExt})
