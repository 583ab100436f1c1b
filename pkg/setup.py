"""Optional GMP extension build; the package works without it."""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Skip the compiled kernel when the compiler or GMP is unavailable."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any build failure means fallback
            print(f"warning: compiled kernel not built ({exc}); using pure Python",
                  file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: skipping {ext.name} ({exc})", file=sys.stderr)


try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("plrenorm._kernel._ckernel", ["src/plrenorm/_kernel/_ckernel.pyx"],
                   libraries=["gmp"])],
        compiler_directives={"language_level": 3}, quiet=True)

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
