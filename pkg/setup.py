"""Builds the optional compiled trajectory kernel.

The package works without it (NumPy fallback). Set CMBEC_NO_EXT=1 to
skip the build, CMBEC_NO_OPENMP=1 to build single-threaded.
"""

import os
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, Cython missing, ...
            print(f"warning: compiled kernel not built ({exc}); using NumPy fallback",
                  file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            if "-fopenmp" not in ext.extra_compile_args:
                print(f"warning: could not build {ext.name}: {exc}", file=sys.stderr)
                return
            print("warning: OpenMP build failed, retrying without", file=sys.stderr)
            ext.extra_compile_args.remove("-fopenmp")
            ext.extra_link_args.remove("-fopenmp")
            try:
                super().build_extension(ext)
            except Exception as exc2:
                print(f"warning: could not build {ext.name}: {exc2}", file=sys.stderr)


def extensions():
    if os.environ.get("CMBEC_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    flags = ["-O3", "-fcx-limited-range"]
    link = []
    if not os.environ.get("CMBEC_NO_OPENMP") and sys.platform != "darwin":
        flags.append("-fopenmp")
        link.append("-fopenmp")
    ext = Extension(
        "cmbec.positivep._ckernel",
        ["src/cmbec/positivep/_ckernel.pyx"],
        extra_compile_args=flags,
        extra_link_args=link,
    )
    return cythonize([ext], language_level=3, quiet=True)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
