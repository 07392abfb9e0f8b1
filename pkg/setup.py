import re
from setuptools import setup


with open("batchlp/__version__.py") as f:
    version = re.search(
        r'^__version__\s*=\s*[\'"]([^\'"]*)[\'"]', f.read(), re.MULTILINE
    ).group(1)

if not version:
    raise RuntimeError("version is not set")

with open("README.md", encoding="UTF-8") as f:
    readme = f.read()

extras_require = {
    "test": [
        "pytest>=7.0",
    ]
}

packages = ["batchlp", "batchlp.formats"]

# This call to setup() does all the work
setup(
    name="batchlp",
    version=version,
    description="A batched first-order LP solver for many LPs sharing one constraint matrix.",
    long_description=readme,
    long_description_content_type="text/markdown",
    packages=packages,
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.8",
        "pydantic>=1.10,<2",
        "orjson",
    ],
    extras_require=extras_require,
    entry_points={
        "console_scripts": [
            "batchlp=batchlp.cli:run",
        ]
    },
    include_package_data=True,
    python_requires=">=3.8.0",
    license="MIT",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "License :: OSI Approved :: MIT License",
        "Intended Audience :: Science/Research",
        "Natural Language :: English",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Typing :: Typed",
    ],
)
