#!/usr/bin/env python3
"""
Setup script for ner-transfer package.
"""

from setuptools import setup, find_packages

setup(
    name="ner-transfer",
    version="1.0.0",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    include_package_data=True,
    install_requires=[
        "numpy>=1.24",
        "tabulate>=0.9",
    ],
    entry_points={
        "console_scripts": [
            "ner-transfer=ner_transfer.ner_transfer_cli:main",
        ],
    },
    package_data={
        "ner_transfer": [
            "specs/*.cfg",
        ],
    },
    python_requires=">=3.10",
)
