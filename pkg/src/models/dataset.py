"""
Grouped observation storage for the errors-in-variables model.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from src.utils.errors import DataSchemaError

MIN_GROUP_SIZE = 3


@dataclass
class Dataset:
    """
    Per-group observation matrices.

    Attributes:
        groups (list): p arrays of shape (n_k, l+1); row j is (Y_1..Y_l, X)
    """

    groups: list

    def __post_init__(self):
        self.groups = [np.atleast_2d(np.asarray(g, dtype=float)) for g in self.groups]
        if not self.groups:
            raise ValueError("Dataset needs at least one group")
        width = self.groups[0].shape[1]
        for k, g in enumerate(self.groups):
            if g.shape[1] != width:
                raise ValueError(f"Group {k + 1} has {g.shape[1]} columns, expected {width}")
            if not np.all(np.isfinite(g)):
                raise ValueError(f"Group {k + 1} contains non-finite values")

    @property
    def l(self):
        return self.groups[0].shape[1] - 1

    @property
    def p(self):
        return len(self.groups)

    @property
    def group_sizes(self):
        return tuple(g.shape[0] for g in self.groups)

    def check_against(self, spec):
        """
        Verify that the data shape matches a model specification.

        Raises:
            ValueError: If l, p or the group sizes disagree
        """
        if self.l != spec.l or self.p != spec.p or self.group_sizes != spec.group_sizes:
            raise ValueError(
                f"Data shape (l={self.l}, p={self.p}, n={self.group_sizes}) does not match "
                f"model (l={spec.l}, p={spec.p}, n={spec.group_sizes})"
            )

    def scaled(self, factor):
        return Dataset([factor * g for g in self.groups])

    @staticmethod
    def fieldnames(l):
        return ["group"] + [f"y{i + 1}" for i in range(l)] + ["x"]

    def to_csv(self, path):
        """
        Write the dataset with header group,y1,...,yl,x.

        Args:
            path (str): Output file path

        Raises:
            IOError: If the file cannot be written
        """
        fieldnames = self.fieldnames(self.l)
        try:
            with open(path, "w", newline='', encoding='utf-8') as f:
                writer = csv.writer(f)
                writer.writerow(fieldnames)
                for k, g in enumerate(self.groups, 1):
                    for row in g:
                        writer.writerow([k] + [repr(float(v)) for v in row])
        except (IOError, OSError) as e:
            raise IOError(f"Cannot write dataset {path}: {e}")

    @classmethod
    def from_csv(cls, path, l=None, p=None):
        """
        Read a dataset from CSV.

        Group labels must be the integers 1..p; every group needs at least
        MIN_GROUP_SIZE observations.

        Args:
            path (str): Input file path
            l (int or None): Expected number of responses
            p (int or None): Expected number of groups

        Returns:
            Dataset: The parsed dataset

        Raises:
            DataSchemaError: On header, value or group errors
            IOError: If the file cannot be read
        """
        try:
            with open(path, "r", newline='', encoding='utf-8') as f:
                reader = csv.DictReader(f)
                if reader.fieldnames:
                    reader.fieldnames = [name.strip() for name in reader.fieldnames]
                n_resp = cls._check_header(reader.fieldnames or [], l)
                columns = cls.fieldnames(n_resp)[1:]

                rows = {}
                for row in reader:
                    line = reader.line_num
                    label = cls._parse_group(row.get("group"), line)
                    values = [cls._parse_value(row.get(col), line, col) for col in columns]
                    rows.setdefault(label, []).append(values)
        except FileNotFoundError:
            raise IOError(f"Data file not found: {path}")
        except UnicodeDecodeError as e:
            raise DataSchemaError(f"File is not valid UTF-8: {e}")
        except (IOError, OSError) as e:
            raise IOError(f"Cannot read data file {path}: {e}")

        if not rows:
            raise DataSchemaError("No observations found")
        labels = sorted(rows)
        expected = list(range(1, (p or len(labels)) + 1))
        if labels != expected:
            raise DataSchemaError(
                f"Group labels must be 1..{len(expected)}, found {labels}", column="group")
        for label in labels:
            if len(rows[label]) < MIN_GROUP_SIZE:
                raise DataSchemaError(
                    f"group too small: group {label} has {len(rows[label])} observations "
                    f"(minimum {MIN_GROUP_SIZE})", column="group")
        return cls([np.array(rows[label]) for label in labels])

    @classmethod
    def _check_header(cls, header, l):
        if "group" not in header:
            raise DataSchemaError("Missing required column 'group'", line=1, column="group")
        if "x" not in header:
            raise DataSchemaError("Missing required column 'x'", line=1, column="x")
        n_resp = sum(1 for h in header if h.startswith("y") and h[1:].isdigit())
        if n_resp == 0:
            raise DataSchemaError("Missing response columns y1..yl", line=1, column="y1")
        if l is not None and n_resp != l:
            raise DataSchemaError(
                f"Expected {l} response columns, found {n_resp}", line=1)
        for name in cls.fieldnames(n_resp):
            if name not in header:
                raise DataSchemaError(f"Missing required column '{name}'", line=1, column=name)
        return n_resp

    @staticmethod
    def _parse_group(value, line):
        try:
            label = int(str(value).strip())
        except (TypeError, ValueError):
            raise DataSchemaError(f"Invalid group label {value!r}", line=line, column="group")
        if label < 1:
            raise DataSchemaError(f"Group labels start at 1, got {label}",
                                  line=line, column="group")
        return label

    @staticmethod
    def _parse_value(value, line, column):
        if value is None or not str(value).strip():
            raise DataSchemaError("Empty value", line=line, column=column)
        try:
            number = float(str(value).strip())
        except ValueError:
            raise DataSchemaError(f"Invalid number {value!r}", line=line, column=column)
        if not math.isfinite(number):
            raise DataSchemaError(f"Non-finite value {value!r}", line=line, column=column)
        return number
