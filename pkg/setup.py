# -*- coding: utf-8 -*-
from setuptools import setup, find_packages

setup(
    name="hybrid-beam",
    use_scm_version=True,
    setup_requires=["setuptools-scm"],
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    install_requires=[
        "numpy>=1.24",
        "scipy>=1.10",
        "pandas>=2.0",
        "pydantic>=2.0.0",
    ],
    extras_require={
        "test": ["pytest>=7.0", "pytest-asyncio>=0.23"],
        "plots": ["matplotlib>=3.6"],
    },
    description="Iterative Fourier-domain hybrid testing of a cantilever beam: substructuring, delay stability, virtual rig and Broyden coupling",
    long_description=open("README.md", encoding="utf-8").read(),
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: Apache Software License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.9",
    entry_points={
        "console_scripts": [
            "hybrid-beam=hybrid_beam.cli:main",
        ],
    },
    keywords=["hybrid testing", "substructuring", "harmonic balance", "broyden", "delay stability"],
    include_package_data=True,
    package_data={"hybrid_beam": ["data/*.json"]},
)
