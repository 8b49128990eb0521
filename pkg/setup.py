from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [Extension("memescan.kernels._core", ["src/memescan/kernels/_core.pyx"])],
        language_level=3,
    )

setup(ext_modules=ext_modules)
