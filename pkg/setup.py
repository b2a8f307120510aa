"""Build script for the compiled kernel extension.

The extension is optional: if the build fails (no compiler, no Cython), the
package installs anyway and falls back to the NumPy kernels at import time.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    extensions = []
else:
    extensions = cythonize(
        [
            Extension(
                "sparseloc.kernels._conv",
                ["src/sparseloc/kernels/_conv.pyx"],
                extra_compile_args=["-O3", "-march=native"],
            )
        ],
        language_level=3,
    )

for ext in extensions:
    ext.optional = True

setup(ext_modules=extensions)
