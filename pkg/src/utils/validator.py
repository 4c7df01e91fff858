"""
Typed access to configuration tables.
"""

import math

from src.utils.errors import ConfigError


class ConfigValidator:
    """
    Provides getters that validate one key of a parsed configuration table.
    Every failure raises ConfigError naming the key.
    """

    _MISSING = object()

    @staticmethod
    def _fetch(table, key, default):
        if key in table:
            return table[key]
        if default is ConfigValidator._MISSING:
            raise ConfigError(f"Missing required key '{key}'")
        return default

    @staticmethod
    def get_positive_integer(table, key, default=_MISSING):
        """
        Get a positive integer.

        Args:
            table (dict): Parsed configuration
            key (str): Key to read
            default: Value used when the key is absent (required if omitted)

        Returns:
            int: Validated positive integer

        Raises:
            ConfigError: If the value is missing or not a positive integer
        """
        value = ConfigValidator._fetch(table, key, default)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"'{key}' must be an integer, got {value!r}")
        if value <= 0:
            raise ConfigError(f"'{key}' must be positive, got {value}")
        return value

    @staticmethod
    def get_non_negative_integer(table, key, default=_MISSING):
        value = ConfigValidator._fetch(table, key, default)
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            raise ConfigError(f"'{key}' must be a non-negative integer, got {value!r}")
        return value

    @staticmethod
    def get_integer_list(table, key, default=_MISSING):
        """Integer or list of positive integers, returned as a list."""
        value = ConfigValidator._fetch(table, key, default)
        items = value if isinstance(value, list) else [value]
        if not items:
            raise ConfigError(f"'{key}' must not be empty")
        for item in items:
            ConfigValidator.get_positive_integer({key: item}, key)
        return list(items)

    @staticmethod
    def get_positive_float(table, key, default=_MISSING):
        """
        Get a positive finite number.

        Raises:
            ConfigError: If the value is missing, not a number or not positive
        """
        value = ConfigValidator.get_float(table, key, default)
        if value is not None and value <= 0:
            raise ConfigError(f"'{key}' must be positive, got {value}")
        return value

    @staticmethod
    def get_float(table, key, default=_MISSING):
        value = ConfigValidator._fetch(table, key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"'{key}' must be a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"'{key}' must be finite")
        return float(value)

    @staticmethod
    def get_float_array(table, key, default=_MISSING):
        """Number, list of numbers or list of lists of numbers."""
        value = ConfigValidator._fetch(table, key, default)
        if value is None:
            return None

        def check(item):
            if isinstance(item, list):
                return [check(v) for v in item]
            return ConfigValidator.get_float({key: item}, key)

        return check(value)

    @staticmethod
    def get_probabilities(table, key, default=_MISSING):
        value = ConfigValidator._fetch(table, key, default)
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError(f"'{key}' must be a non-empty list of probabilities")
        out = []
        for item in value:
            prob = ConfigValidator.get_float({key: item}, key)
            if not 0.0 < prob < 1.0:
                raise ConfigError(f"'{key}' values must lie in (0, 1), got {prob}")
            out.append(prob)
        return tuple(out)

    @staticmethod
    def get_choice(table, key, choices, default=_MISSING):
        """
        Get a string among the allowed choices.

        Raises:
            ConfigError: If the value is not one of choices
        """
        value = ConfigValidator._fetch(table, key, default)
        if not isinstance(value, str) or value.strip() not in choices:
            raise ConfigError(f"'{key}' must be one of {', '.join(choices)}, got {value!r}")
        return value.strip()
