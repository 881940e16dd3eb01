"""Build hook for the optional compiled kernel core.

``pip install -e .`` compiles ``vagnet._kernels._native`` when Cython and a C
toolchain are present; otherwise the package installs pure-Python and the
NumPy kernels are selected at import time. Set VAGNET_PURE=1 to skip the
extension build explicitly.
"""

import os

from setuptools import setup


def extension_modules():
    if os.environ.get("VAGNET_PURE") == "1":
        return []
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    ext = Extension(
        "vagnet._kernels._native",
        ["src/vagnet/_kernels/_native.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extension_modules())
