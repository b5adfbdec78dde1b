from setuptools import setup

version = "0.1.0"
name = 'dynaweight'
author = 'dynaweight developers'
author_email = 'dynaweight@users.noreply.github.com'
license_ = "MIT"
url = 'https://github.com/dynaweight/dynaweight'

classifiers=[
    # Python versions supported by dynaweight
    "Programming Language :: Python :: 3",
    "Programming Language :: Python :: 3.8",
    "Programming Language :: Python :: 3.9",
    "Programming Language :: Python :: 3.10",
    "Programming Language :: Python :: 3.11",

    # License
    "License :: OSI Approved :: MIT License",

    # OS support
    "Operating System :: OS Independent",

    # Maturity of dynaweight
    "Development Status :: 3 - Alpha",

    # Intended audience
    "Intended Audience :: Science/Research",
]

install_requires = [
    'wheel>=0.32',
    'numpy>=1.20',
    'scipy>=1.6',
    'filterpy>=1.4.5',
    'scikit-learn>=0.24',
]
extras_require = {
    'test': ['pytest>=7.0'],
}
description = (
    'Static-probability feature weighting and camera pose estimation'
    ' in dynamic scenes'
)
with open("README.md", "r") as fh:
    long_description = fh.read()
long_description_content_type = "text/markdown"

packages = ['dynaweight']

package_dir = {
    'dynaweight': 'src/dynaweight'
}

setup(
    name=name,
    version=version,
    classifiers=classifiers,
    url=url,
    author_email=author_email,
    author=author,
    license=license_,
    description=description,
    long_description=long_description,
    long_description_content_type=long_description_content_type,
    install_requires=install_requires,
    extras_require=extras_require,
    package_dir=package_dir,
    packages=packages,
    include_package_data=True,
    python_requires='>=3.8, <4',
    scripts=["run_dynaweight.py"],
)
