from setuptools import setup, find_packages

setup(
    name="temporal_communities",
    version="0.1.0",
    description="Multimodal temporal community embedding: heterogeneous graph encoder, "
                "topological and temporal context sampling, split/merge mixture clustering",
    packages=find_packages(exclude=["tests", "tests.*"]),
    python_requires=">=3.10",
    install_requires=[
        "numpy>=1.24.0",
        "scipy>=1.10.0",
        "pandas>=1.5.0",
        "matplotlib>=3.6.0",
        "scikit-learn>=1.2.0",
        "networkx>=3.0",
        "tqdm>=4.64.0",
    ],
    extras_require={
        "test": ["pytest>=7.2.0"],
    },
    entry_points={
        "console_scripts": [
            # `tcom train data/ --out runs/full` etc.
            "tcom=graph_simulations.temporal_communities.main:main",
        ],
    },
)
