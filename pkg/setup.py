from setuptools import setup


with open('README.md') as f:
    long_description = f.read()

setup(
    version='0.1.0',
    classifiers=['Operating System :: OS Independent',
                 'Development Status :: 3 - Alpha',
                 'License :: OSI Approved :: BSD License',
                 'Programming Language :: Python :: 3.8',
                 'Programming Language :: Python :: 3.9',
                 'Programming Language :: Python :: 3.10',
                 'Programming Language :: Python :: 3.11',
                 'Topic :: System :: Networking',
                 ],
    description='SYN flood mitigation engine (SYN cookies and SYN authentication) '
                'with a discrete-event testbed, pcap replay and benchmarks.',
    install_requires=['numpy',
                      'pandas',
                      'scipy>=1.7',
                      'matplotlib',
                      'tqdm>=4.36.0',
                      'simpy>=4',
                      'dpkt',
                      'tomli; python_version<"3.11"'],
    extras_require={'fast': ['siphashc'],
                    'test': ['pytest', 'scapy', 'siphashc']},
    entry_points={'console_scripts': ['synproxy=synproxy.cli:main']},
    license='BSD',
    keywords=['tcp', 'syn flood', 'syn cookies', 'ddos', 'simulation'],
    long_description=long_description,
    long_description_content_type='text/markdown',
    name='synproxy',
    packages=['synproxy', 'synproxy/utils', 'synproxy/analysis', 'synproxy/sim'],
    package_data={'synproxy': ['configs/*.toml']},
    python_requires='>=3.8',
    setup_requires=['setuptools>=38.6.0'])
