import os

from setuptools import Extension, setup


def extensions():
    if os.environ.get("FUZZYMARKET_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "fuzzymarket._kernels",
        ["src/fuzzymarket/_kernels.pyx"],
        # no fast-math / FMA contraction: the kernel must round exactly like the numpy fallback
        extra_compile_args=["-O3", "-ffp-contract=off", "-fno-fast-math"],
        optional=True,
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )


setup(ext_modules=extensions())
