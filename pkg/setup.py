#! env/bin/python
from setuptools import setup


def main():

    packages = ['mvsemi', 'mvsemi.tests']

    description = ("Semi-supervised multi-view learning with missing views: "
        "product-of-experts fusion, an information-bottleneck classifier, "
        "an unsupervised ELBO and a cross-view contrastive regularizer, "
        "with baselines, imputation and sensitivity sweeps.")

    setup(name="mvsemi",
          version='0.1.0',
          description=description,
          license="Apache",
          classifiers=[
              'Development Status :: 3 - Alpha',
              'Programming Language :: Python :: 3',
              'Intended Audience :: Science/Research',
              'Topic :: Scientific/Engineering :: Artificial Intelligence',
              ],
          packages=packages,
          python_requires='>=3.8',
          install_requires=['numpy>=1.23.0', 'scipy', 'torch>=2.0', 'pandas>=1.5'],
          entry_points={
              'console_scripts': [
                  'mvsemi = mvsemi.main:main',
                  'mvsemi-glyphs = mvsemi.scripts:export_glyphs',
                  'mvsemi-summary = mvsemi.scripts:summarize_runs',
                  ]
              },
         )


if __name__=='__main__':
    main()
