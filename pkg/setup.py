"""
LazyGNN - shallow graph neural network with lazy propagation
"""

from setuptools import setup, find_packages

setup(
    name="lazy-gnn",
    version="0.3.0",
    description="LazyGNN: lazy forward/backward diffusion for semi-supervised node classification",
    author="Bashirov",
    python_requires=">=3.11",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    install_requires=[
        "numpy>=1.26.0",
        "scipy>=1.11.0",
        "python-dotenv>=1.0.0",
        "pydantic>=2.0.0",
        "pydantic-settings>=2.0.0",
    ],
    extras_require={
        "dev": ["pytest>=7.4.0"],
    },
    entry_points={
        "console_scripts": [
            "lazygnn=cli.main:main",
        ],
    },
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3.11",
    ],
)
