import os
import setuptools

_here = os.path.abspath(os.path.dirname(__file__))

with open("README.md", "r") as fh:
    long_description = fh.read()

version = {}
with open(os.path.join(_here, 'shadowprint', 'version.py')) as f:
    exec(f.read(), version)

setuptools.setup(
    name="shadowprint",
    version=version['__version__'],
    author="shadowprint contributors",
    author_email="author@example.com",
    description="Desk-scale laboratory for clustering-based backdoor attacks and their detection",
    long_description=long_description,
    long_description_content_type="text/markdown",
    license='MIT',
    packages=setuptools.find_packages(),
    package_data={'shadowprint': ['docs/*.cfg', 'docs/*.yaml']},
    install_requires=[
      'numpy>=1.22',
      'pandas>=1.3',
      'PyYAML>=3.13',
      'scikit-learn>=1.0'
    ],
    tests_require=['testfixtures>=6.10.2'],
    entry_points={
        'console_scripts': ['shadowprint=shadowprint.experiments.cli:main'],
    },
    classifiers=[
        'Development Status :: 3 - Alpha',
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires='>=3.8',
)
