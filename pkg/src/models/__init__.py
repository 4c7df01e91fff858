"""
Models package: elliptical generators, the EIV model, likelihood,
adjusted statistics, fitting and the Monte Carlo harness.
"""

from src.models.dataset import Dataset
from src.models.eiv_model import Case, ModelSpec, ParamVector
from src.models.elliptical import DensityGenerator, Family
from src.models.likelihood import LikelihoodContext

__all__ = ['Dataset', 'Case', 'ModelSpec', 'ParamVector', 'DensityGenerator', 'Family',
           'LikelihoodContext']
