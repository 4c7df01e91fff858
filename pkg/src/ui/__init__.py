"""
Command-line surface: command handlers and report rendering.
"""

from src.ui.commands import CommandRunner

__all__ = ['CommandRunner']
