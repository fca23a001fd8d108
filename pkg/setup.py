from setuptools import setup, find_packages

version = "Unknown"
for line in open("qsdentropy/_version.py"):
    if line.startswith("__version__"):
        version = line.strip().split("=")[1].strip().replace('"', '')

print(version)
setup(
    name='QSDEntropy',
    version=version,
    description='QSDEntropy: stochastic entropy production in quantum state diffusion of a two-level system',
    packages=find_packages(exclude=["test"]),
    install_requires=["numpy>=1.17", "scipy>=1.4", "sympy>=1.5"],
    python_requires=">=3.6",
    scripts=['scripts/run_qsd.py'],
    test_suite="test",
)
