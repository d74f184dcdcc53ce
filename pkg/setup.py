# Copyright 2024 The gridfire Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
from setuptools import setup, find_packages


setup(
    name='gridfire',
    version='0.1.0',
    description='Wildfire-aware distribution grid switching under decision-dependent outage uncertainty',
    license='Apache License, Version 2.0',
    packages=find_packages(exclude=["tests", "scripts"]),
    py_modules=["run_gridfire"],
    include_package_data=True,
    python_requires='>=3.8',
    install_requires=[
        'ml-collections>=0.1.0',
        'networkx>=3.1',
        'numpy>=1.21',
        'pandas>=1.3',
        'PyYAML>=5.4',
        'scipy>=1.9',
        'tqdm>=4.62',
    ],
    extras_require={
        'mip': ['mip>=1.14'],
    },
    entry_points={
        'console_scripts': ['gridfire=run_gridfire:cli'],
    },
    classifiers=[
        'License :: OSI Approved :: Apache Software License',
        'Operating System :: POSIX :: Linux',
        'Programming Language :: Python :: 3.8',
        'Topic :: Scientific/Engineering :: Mathematics',
    ],
)
