import pathlib
from setuptools import find_packages, setup

# The directory containing this file
HERE = pathlib.Path(__file__).parent

# The text of the README file
README = (HERE / "README.md").read_text()

setup(
    name="cpgloss",
    version="0.1.0",
    description="Convolution-based probability gradient (CPG) loss for sharper semantic segmentation boundaries",
    long_description=README,
    long_description_content_type="text/markdown",
    license="MIT",
    classifiers=[
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
    ],
    packages=find_packages(exclude=("tests",)),
    include_package_data=False,
    python_requires=">=3.8",
    install_requires=["numpy", "scipy", "pandas>=1.5", "Pillow"],
    extras_require={"test": ["pytest", "hypothesis"]},
    entry_points={"console_scripts": ["cpgloss = cpgloss.cli:main"]},
)
