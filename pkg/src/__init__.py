"""
EIV adjusted likelihood ratio toolkit.
"""

__version__ = "0.1.0"
