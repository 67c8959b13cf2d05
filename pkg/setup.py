#!/usr/bin/env python
import os

from setuptools import find_packages, setup


def _get_version():
    version_file = os.path.normpath(os.path.join(os.path.dirname(__file__), 'phdae_cli', 'VERSION'))
    with open(version_file) as fh:
        version = fh.read().strip()
        return version


setup(name='phdae',
      version=_get_version(),
      description='Identification of linear port-Hamiltonian descriptor models',
      long_description=open('README.md').read(),
      long_description_content_type='text/markdown',
      entry_points={
          'console_scripts': ['phdae = phdae_cli.cli:cli']
      },
      python_requires=">=3.8",
      packages=find_packages(exclude=['tests', 'tests.*']),
      install_requires=[
          'numpy>=1.22',
          'scipy>=1.8',
          'ruamel.yaml<0.18.0',
          'rich>=12.0.0',
          'click>=7.1',
          'jinja2',
          "jsonschema>=3.2.0",
          'deepmerge',
      ],
      tests_require=['pytest'],
      extras_require={
          'dev': [
              'tox',
              'pytest>=4.6',
              'pytest-flake8',
              'flake8==3.9.2',
              'pytest-cov',
          ],
      },
      classifiers=[
          "Programming Language :: Python :: 3.8",
          "Programming Language :: Python :: 3.9",
          "Programming Language :: Python :: 3.10",
          "Programming Language :: Python :: 3.11",
          "Operating System :: OS Independent",
          "Development Status :: 3 - Alpha"
      ],
      package_data={
          'phdae_cli': ['config_schema.json', 'VERSION']
      })
