"""
Utilities package: logging, errors, configuration and dense linear algebra.
"""

from src.utils.logger import get_logger, setup_logger
from src.utils.validator import ConfigValidator

__all__ = ['ConfigValidator', 'get_logger', 'setup_logger']
