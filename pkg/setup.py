import os
import setuptools

def read(fname):
  with open(os.path.join(os.path.dirname(__file__), fname), 'rt') as f:
    return f.read()

def requirements():
  with open(os.path.join(os.path.dirname(__file__), 'requirements.txt'), 'rt') as f:
    return f.readlines()

setuptools.setup(
  name="flowcritic",
  version="0.1.0",
  setup_requires=[
    'numpy',
  ],
  install_requires=requirements(),
  extras_require={
    "test": [ "pytest", "pytest-cov" ],
  },
  packages=setuptools.find_packages(exclude=[ 'test', 'benchmarks', 'examples*' ]),
  entry_points={
    "console_scripts": [
      "flowcritic=flowcritic.cli:main",
    ],
  },
  description="Distributional flow critics for offline and offline-to-online RL at desk scale.",
  long_description=read('README.md'),
  long_description_content_type="text/markdown",
  license="BSD 3-Clause",
  keywords="reinforcement-learning distributional-rl flow-matching quantile-regression offline-rl numpy",
  classifiers=[
    "Intended Audience :: Developers",
    "Intended Audience :: Science/Research",
    "Development Status :: 3 - Alpha",
    "License :: OSI Approved :: BSD License",
    "Programming Language :: Python",
    "Programming Language :: Python :: 3",
    "Topic :: Scientific/Engineering :: Artificial Intelligence",
    "Operating System :: POSIX",
    "Operating System :: MacOS",
  ],
)
