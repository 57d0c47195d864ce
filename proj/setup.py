"""Builds the _mltn extension through the project's CMake tree."""

import os
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        source_dir = Path(__file__).resolve().parent
        ext_path = Path(self.get_ext_fullpath(ext.name)).resolve()
        package_dir = ext_path.parent
        build_dir = Path(self.build_temp).resolve() / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)

        cfg = "Debug" if self.debug else "Release"
        cmake_args = [
            f"-DCMAKE_BUILD_TYPE={cfg}",
            f"-DPython3_EXECUTABLE={sys.executable}",
            "-DMLTN_BUILD_TESTS=OFF",
            "-DMLTN_BUILD_PYTHON=ON",
        ]
        env = os.environ.copy()
        subprocess.run(["cmake", "-S", str(source_dir), "-B", str(build_dir)]
                       + cmake_args, check=True, env=env)
        subprocess.run(["cmake", "--build", str(build_dir), "--target",
                        "_mltn", "-j"], check=True, env=env)

        built = next((build_dir / "python" / "mltn").glob("_mltn*.so"))
        package_dir.mkdir(parents=True, exist_ok=True)
        self.copy_file(str(built), str(ext_path))


setup(
    packages=["mltn"],
    package_dir={"mltn": "python/mltn"},
    ext_modules=[CMakeExtension("mltn._mltn")],
    cmdclass={"build_ext": CMakeBuild},
    zip_safe=False,
)
