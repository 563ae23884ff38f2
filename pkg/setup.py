#!/usr/bin/env python3
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from setuptools import setup, find_packages
from pimsbo import __version__

# The setup.py is kept minimal with just enough configuration to handle packaging
setup(
    name="pimsbo",
    version=__version__,
    packages=find_packages(include=["pimsbo", "pimsbo.*"]),
    include_package_data=True,
)
