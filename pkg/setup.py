import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

directives = {
    "boundscheck": False,
    "wraparound": False,
    "cdivision": True,
    "initializedcheck": False,
    "language_level": 3,
}

ext = Extension(
    "disquo._kernel",
    ["src/disquo/_kernel.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3"],
)

setup(ext_modules=cythonize([ext], compiler_directives=directives))
