#!/usr/bin/env python
import os
from setuptools import setup
from setuptools import find_packages
import sys
from perclab import __version__ as VERSION

# 'setup.py publish' shortcut.
if sys.argv[-1] == 'publish':
    os.system('python setup.py sdist bdist_wheel')
    os.system('twine upload dist/*')
    sys.exit()

description = ('Simulate and predict bootstrap percolation with inhibition '
               'on directed random graphs.')

with open('README.md', 'r') as f:
    long_description = f.read()

install_requires = [
    'numpy>=1.22.0',
    'pandas>=1.4.0',
    'python-dotenv>=0.19.2',
    'tqdm>=4.62.0',
]

extras_require = {
    'test': ['pytest>=7.0.0'],
}

setup(
    name='perclab',
    version=VERSION,
    description=description,
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=['tests']),
    include_package_data=True,
    install_requires=install_requires,
    extras_require=extras_require,
    entry_points={
        'console_scripts': ['perc-lab=perclab.cli:main'],
    },
    python_requires='>=3.10',
    keywords=['python', 'percolation', 'random graphs', 'simulation'],
    license='MIT',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Programming Language :: Python :: 3.10',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
    ],
)
