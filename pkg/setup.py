"""Build script: compiles the hot simulation kernel when Cython is available.

The package works without the extension (a pure-Python kernel is selected at
import time), so a failed build is not fatal.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "gridshield._core",
                ["src/gridshield/_core.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"warning: building without compiled kernel ({exc})")

setup(ext_modules=ext_modules)
