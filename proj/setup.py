# SPDX-License-Identifier: Apache-2.0
from glob import glob

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

ext = Pybind11Extension(
    "owl._owl",
    sorted(glob("src/*.cpp")) + ["bindings/owl_py.cpp"],
    include_dirs=["include", "vendor"],
    cxx_std=20,
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
