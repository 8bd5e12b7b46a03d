#!/usr/bin/env python
import os

from setuptools import find_packages, setup

# read the version from version.txt
with open(os.path.join("egocapture4d", "version.txt"), encoding="utf-8") as file_handler:
    __version__ = file_handler.read().strip()

# Test requirements
test_requirements = [
    "pytest",
    "pytest-cov",
    "pytest-mock",
]
# Documentation requirements
doc_requirements = [
    "sphinx",
    "sphinx_rtd_theme",
    "myst-parser",
    "sphinx-autodoc-typehints",
    "sphinx-copybutton",
    "sphinx-prompt",
    "sphinx-notfound-page",
]

setup(
    name="egocapture4d",
    description="Scene-grounded 4D capture of the second person in egocentric video",
    version=__version__,
    license="MIT",
    keywords=["egocentric", "human pose", "body model", "scene contact", "optimization", "3D"],
    classifiers=[
        "Development Status :: 3 - Alpha",
        "License :: OSI Approved :: MIT License",
        "Natural Language :: English",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3.8",
        "Topic :: Scientific/Engineering :: Image Recognition",
    ],
    packages=[package for package in find_packages() if package.startswith("egocapture4d")],
    package_data={"egocapture4d": ["version.txt"]},
    install_requires=[
        "numpy",
        "scipy",
        "torch",
        "tqdm",
        "trimesh",
        "tomli; python_version < '3.11'",
        "tomli-w",
    ],
    extras_require={
        "vis": ["plotly"],
        "dev": ["black"] + test_requirements + doc_requirements,
        "test": test_requirements,
        "doc": doc_requirements,
    },
    entry_points={"console_scripts": ["egocapture4d=egocapture4d.cli.main:main"]},
    tests_require=test_requirements,
    python_requires=">=3.8",
    platforms=["any"],
)
