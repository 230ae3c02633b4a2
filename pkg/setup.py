from setuptools import find_packages, setup

setup(
    name="hd-lab",
    version="0.1.0",
    description="Heat dispersion laboratory on triangulated surfaces",
    packages=find_packages(exclude=("tests",)),
    package_data={"app": ["templates/*.j2"]},
    python_requires=">=3.10",
    install_requires=[
        "numpy>=1.26,<3",
        "scipy>=1.11,<2",
        "pydantic>=2.5,<3",
        "pydantic-settings>=2.0",
        "pandas>=2.0,<3",
        "jinja2>=3.1.0",
    ],
    extras_require={"test": ["pytest>=8.0.0"]},
    entry_points={"console_scripts": ["hd=app.main:main"]},
)
