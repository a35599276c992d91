import os

import numpy
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Leave the pure-Python kernel in charge when compilation fails."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"WARNING: compiled kernels not built ({exc}); using pure-Python fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"WARNING: failed to build {ext.name} ({exc}); using pure-Python fallback")


def extensions():
    if os.environ.get("TOPICFUSE_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "topicfuse.rost._gibbs_ext",
        ["src/topicfuse/rost/_gibbs_ext.pyx"],
        include_dirs=[numpy.get_include()],
        # no contraction: the compiled and Python kernels must agree bit for bit
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
