from setuptools import setup

setup(
    name='sattext',
    version='0.0.0',
    packages=['sattext', 'sattext.kernels', 'sattext.utils'],
    package_dir={'':'src'},
    install_requires=[
        'numpy',
        'scipy',
        'dacite',
        'scikit-learn',
        'tqdm',
    ],
    extras_require={
        'test': ['pytest'],
    },
    entry_points={
        'console_scripts': ['sat=sattext.sat_cli:main'],
    },
)
