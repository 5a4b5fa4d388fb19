import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off keeps the kernel's arithmetic bit-identical to the
# numpy fallback (no FMA contraction), which the backend-equivalence
# tests rely on.
extensions = [
    Extension(
        "ringflux._kernel",
        ["src/ringflux/_kernel.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
    )
)
