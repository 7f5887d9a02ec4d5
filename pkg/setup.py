from setuptools import setup

setup(
    name='PolarQuant',
    version='0.1',
    packages=['polarquant', 'polarquant.diffs', 'polarquant.precondition'],
    package_data={'polarquant.diffs': ['validation.config']},
    license='',
    description='A Python 3 library for polar-coordinate quantization of embeddings and KV caches.',
    install_requires=['numpy', 'scipy'],
    entry_points={'console_scripts': ['polarquant=polarquant.cli:main']},
    test_suite='nose.collector',
    tests_require=['nose'],
)
