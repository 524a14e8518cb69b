"""
Packaging for the changespot change detection toolkit.
"""
from setuptools import setup
from changespot import get_version_string

import sys

if sys.version_info < (3, 8):
    sys.exit("Only Python 3.8 and greater is supported")

setup(
    name="changespot",
    version=get_version_string(),
    packages=["changespot"],
    license="MIT",
    description="Change detection by self-localization fault diagnosis",
    install_requires=[
        "numpy>=1.21",
        "scipy>=1.7",
        "scikit-learn>=1.0",
        "Pillow>=9.0",
    ],
    entry_points={"console_scripts": ["changespot=changespot.cli:main"]},
)
