"""
Logging configuration for the EIV adjusted likelihood ratio toolkit.
"""

import logging
import os
from datetime import datetime

LOGGER_NAME = 'EIVTest'


def setup_logger(log_dir='logs', log_level=logging.INFO, console=False):
    """
    Configure and return the application logger.

    Library modules log through children of this logger
    (see get_logger), so configuring it once in main.py is enough.

    Args:
        log_dir (str or None): Directory for log files, None disables the file handler
        log_level (int): Logging level (e.g., logging.INFO)
        console (bool): Also mirror records to stderr

    Returns:
        logging.Logger: Configured logger instance
    """
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(log_level)

    # Avoid duplicate handlers
    if logger.handlers:
        return logger

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    if log_dir is not None:
        if not os.path.exists(log_dir):
            try:
                os.makedirs(log_dir)
            except OSError:
                pass

        log_filename = os.path.join(
            log_dir,
            f'eivtest_{datetime.now().strftime("%Y%m%d")}.log'
        )

        try:
            file_handler = logging.FileHandler(log_filename, encoding='utf-8')
            file_handler.setLevel(log_level)
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)
        except (IOError, OSError):
            # If can't create file handler, continue without it
            pass

    if console:
        stream_handler = logging.StreamHandler()
        stream_handler.setLevel(log_level)
        stream_handler.setFormatter(formatter)
        logger.addHandler(stream_handler)

    if not logger.handlers:
        logger.addHandler(logging.NullHandler())

    return logger


def get_logger(module_name):
    """
    Return the child logger used by a library module.

    Args:
        module_name (str): Short module name, e.g. 'inference'

    Returns:
        logging.Logger: Logger named 'EIVTest.<module_name>'
    """
    return logging.getLogger(f'{LOGGER_NAME}.{module_name}')
