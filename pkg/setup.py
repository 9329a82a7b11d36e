#!/usr/bin/env python3
"""
Setup script for shoptoken - LSH-token product retrieval and evaluation kit.

    pip install -e .
    shoptoken --help
"""

from pathlib import Path

from setuptools import find_packages, setup

here = Path(__file__).parent
requirements = [
    line.strip()
    for line in (here / 'requirements.txt').read_text().splitlines()
    if line.strip() and not line.startswith('#')
]

setup(
    name='shoptoken',
    version='0.1.0',
    description='LSH-token approximate nearest neighbour product retrieval with attribute restrictions',
    long_description=(here / 'README.md').read_text(encoding='utf-8'),
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=['tests']),
    python_requires='>=3.8',
    install_requires=requirements,
    entry_points={'console_scripts': ['shoptoken=shoptoken.cli:main']},
)
