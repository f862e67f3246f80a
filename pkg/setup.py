from setuptools import find_packages, setup

VERSION = "0.1.0"
DESCRIPTION = "Fair multi-agent resource allocation with learned per-agent values and an exact allocator."
with open("README.md") as fo:
    LONG_DESCRIPTION = fo.read()

setup(
    name="decaf",
    version=VERSION,
    author="Nickatak",
    author_email="nickle87@gmail.com",
    description=DESCRIPTION,
    long_description=LONG_DESCRIPTION,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=("tests", "tests.*")),
    install_requires=[
        "click>=8.0",
        "numpy>=1.21",
        "pandas>=1.3",
        "tqdm>=4.62",
    ],
    entry_points={
        "console_scripts": [
            "decaf=decaf.cli:main",
        ],
    },
    license="LICENSE.txt",
)
