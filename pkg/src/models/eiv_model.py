"""
Structural errors-in-variables model: parameter layout, location vector,
dispersion matrix and their parameter derivatives.

For group k the observation Z = (Y_1..Y_l, X) has location
mu = (alpha + beta * mu_x, mu_x) and dispersion

    Sigma = sigma2_x * c c^T + D,   c = (beta^T, 1)^T,

where D is diagonal. Depending on the identifiability case, sigma2_x and D
are built from the free coordinates and the known constants:

    lambda_x known:  sigma2_x = lambda_x sigma2_u,  D = diag(sigma2_e, sigma2_u)
    lambda_e known:  sigma2_x free,                 D = diag(lambda_e sigma2_u, sigma2_u)
    intercept known: sigma2_x free,                 D = diag(sigma2_e, sigma2_u)

sigma2_x and D are linear in the coordinates, so all second derivatives of
Sigma come from the c c^T term.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from src.utils.errors import NotPositiveDefinite
from src.utils.matrix_kernels import cholesky


class Case(Enum):
    """Identifiability assumption."""

    LAMBDA_X_KNOWN = "lambda_x"
    LAMBDA_E_KNOWN = "lambda_e"
    INTERCEPT_KNOWN = "intercept"


@dataclass(frozen=True)
class ModelSpec:
    """
    Problem geometry and identifiability constants.

    Attributes:
        l (int): Number of responses
        p (int): Number of groups
        group_sizes (tuple): n_k for each group
        case (Case): Identifiability case
        lambda_x (tuple): Known sigma2_x / sigma2_u per group (case lambda_x)
        lambda_e (tuple): Known sigma2_e / sigma2_u per group, l values each (case lambda_e)
        alpha (tuple): Known intercept vector per group, l values each (case intercept)
    """

    l: int
    p: int
    group_sizes: tuple
    case: Case
    lambda_x: tuple = None
    lambda_e: tuple = None
    alpha: tuple = None
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.l, int) or self.l < 1:
            raise ValueError("l must be a positive integer")
        if not isinstance(self.p, int) or self.p < 1:
            raise ValueError("p must be a positive integer")
        sizes = tuple(int(n) for n in self.group_sizes)
        if len(sizes) != self.p or any(n < 1 for n in sizes):
            raise ValueError("group_sizes must hold p positive integers")
        object.__setattr__(self, 'group_sizes', sizes)

        if self.case is Case.LAMBDA_X_KNOWN:
            values = self._per_group_scalars(self.lambda_x, "lambda_x")
            object.__setattr__(self, 'lambda_x', values)
        elif self.case is Case.LAMBDA_E_KNOWN:
            values = self._per_group_vectors(self.lambda_e, "lambda_e", positive=True)
            object.__setattr__(self, 'lambda_e', values)
        else:
            values = self._per_group_vectors(self.alpha, "alpha", positive=False)
            object.__setattr__(self, 'alpha', values)
        object.__setattr__(self, '_index', _layout(self.case, self.l))

    def _per_group_scalars(self, values, name):
        if values is None:
            raise ValueError(f"{name} is required for case '{self.case.value}'")
        values = np.broadcast_to(np.asarray(values, dtype=float), (self.p,))
        if np.any(values <= 0) or not np.all(np.isfinite(values)):
            raise ValueError(f"{name} must be positive")
        return tuple(float(v) for v in values)

    def _per_group_vectors(self, values, name, positive):
        if values is None:
            raise ValueError(f"{name} is required for case '{self.case.value}'")
        values = np.asarray(values, dtype=float)
        if values.ndim <= 1:
            values = np.broadcast_to(values.reshape(-1) if values.ndim else values, (self.l,))
            values = np.tile(values, (self.p, 1))
        if values.shape != (self.p, self.l):
            raise ValueError(f"{name} must hold l values (optionally per group)")
        if not np.all(np.isfinite(values)) or (positive and np.any(values <= 0)):
            raise ValueError(f"{name} has invalid values")
        return tuple(tuple(float(v) for v in row) for row in values)

    @property
    def s(self):
        """Number of parameters per group."""
        if self.case is Case.LAMBDA_E_KNOWN:
            return self.l + 4
        return 2 * self.l + 3

    @property
    def m(self):
        """Total number of parameters."""
        return self.p * self.s

    @property
    def n(self):
        return sum(self.group_sizes)

    def index(self, name):
        """
        Index of a named coordinate inside a group block.

        Args:
            name (str): Coordinate name, e.g. 'beta1', 'mu_x', 'sigma2_e2'

        Returns:
            int: Zero-based index within the block

        Raises:
            KeyError: If the coordinate does not exist for this case
        """
        return self._index[name]

    def coordinate_names(self):
        """Block coordinate names in layout order."""
        return sorted(self._index, key=self._index.get)

    def slope_indices(self):
        return list(range(self.l))

    def has(self, name):
        return name in self._index

    def variance_indices(self):
        return [i for name, i in self._index.items() if name.startswith('sigma2_')]

    def with_group_sizes(self, group_sizes):
        """Return a copy of the spec with different group sizes."""
        return ModelSpec(self.l, self.p, tuple(group_sizes), self.case,
                         self.lambda_x, self.lambda_e, self.alpha)


def _layout(case, l):
    names = [f'beta{i + 1}' for i in range(l)]
    if case is Case.LAMBDA_X_KNOWN:
        names += ['alpha', 'mu_x', 'sigma2_u'] + [f'sigma2_e{i + 1}' for i in range(l)]
    elif case is Case.LAMBDA_E_KNOWN:
        names += ['alpha', 'mu_x', 'sigma2_x', 'sigma2_u']
    else:
        names += ['mu_x', 'sigma2_x', 'sigma2_u'] + [f'sigma2_e{i + 1}' for i in range(l)]
    return {name: i for i, name in enumerate(names)}


@dataclass
class ParamVector:
    """
    Flat parameter vector theta = (theta_(1), ..., theta_(p)).

    Attributes:
        spec (ModelSpec): Model the vector belongs to
        values (np.ndarray): The m coordinates in natural scale
    """

    spec: ModelSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float).reshape(-1)
        if self.values.shape != (self.spec.m,):
            raise ValueError(f"Expected {self.spec.m} parameters, got {self.values.size}")

    @classmethod
    def from_blocks(cls, spec, blocks):
        return cls(spec, np.concatenate([np.asarray(b, dtype=float) for b in blocks]))

    def block(self, k):
        """Return a copy of the block theta_(k) (k zero-based)."""
        s = self.spec.s
        return self.values[k * s:(k + 1) * s].copy()

    def blocks(self):
        return [self.block(k) for k in range(self.spec.p)]

    def copy(self):
        return ParamVector(self.spec, self.values.copy())

    def with_values(self, values):
        return ParamVector(self.spec, values)

    def index_of(self, name, group):
        """
        Flat index of a coordinate.

        Args:
            name (str): Coordinate name
            group (int): One-based group label

        Returns:
            int: Index into values
        """
        return flat_index(self.spec, name, group)

    def names(self):
        """Flat coordinate names as 'name@group'."""
        block_names = self.spec.coordinate_names()
        return [f'{name}@{k + 1}' for k in range(self.spec.p) for name in block_names]

    def variance_mask(self):
        """Boolean mask of the positivity-constrained coordinates."""
        return variance_mask(self.spec)

    def is_valid(self):
        return bool(np.all(np.isfinite(self.values))
                    and np.all(self.values[self.variance_mask()] > 0))

    def to_dict(self):
        return {name: float(v) for name, v in zip(self.names(), self.values)}


def flat_index(spec, name, group):
    if not 1 <= group <= spec.p:
        raise KeyError(f"group {group} out of range 1..{spec.p}")
    return (group - 1) * spec.s + spec.index(name)


def variance_mask(spec):
    block = np.zeros(spec.s, dtype=bool)
    block[spec.variance_indices()] = True
    return np.tile(block, spec.p)


def true_parameters(spec, alpha=0.5, mu_x=None, sigma2_x=1.5, sigma2_u=0.5,
                    sigma2_e=2.0, beta=None):
    """
    Parameter vector at the simulation study's true values.

    Args:
        spec (ModelSpec): Model
        alpha (float): Common intercept (cases with a free intercept)
        mu_x (float or None): Mean of the true covariate, default 0.5
            (5.0 in the intercept-known case)
        sigma2_x (float): Variance of the true covariate
        sigma2_u (float): Measurement error variance
        sigma2_e (float): Equation error variance
        beta (float, array or None): Slopes, default 0 (1 in the intercept-known case)

    Returns:
        ParamVector: The vector in natural coordinates
    """
    intercept_case = spec.case is Case.INTERCEPT_KNOWN
    if mu_x is None:
        mu_x = 5.0 if intercept_case else 0.5
    if beta is None:
        beta = 1.0 if intercept_case else 0.0
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (spec.l,))

    block = np.zeros(spec.s)
    block[spec.slope_indices()] = beta
    values = {'alpha': alpha, 'mu_x': mu_x, 'sigma2_x': sigma2_x, 'sigma2_u': sigma2_u}
    values.update({f'sigma2_e{i + 1}': sigma2_e for i in range(spec.l)})
    for name, value in values.items():
        if spec.has(name):
            block[spec.index(name)] = value
    return ParamVector.from_blocks(spec, [block] * spec.p)


def known_constants_from_truth(sigma2_x=1.5, sigma2_u=0.5, sigma2_e=2.0):
    """Return (lambda_x, lambda_e) consistent with the generating truth."""
    return sigma2_x / sigma2_u, sigma2_e / sigma2_u


# ---------------------------------------------------------------------------
# location vector

def _mu_x_index(spec):
    return spec.index('mu_x')


def _check_index(spec, *indices):
    for i in indices:
        if not 0 <= i < spec.s:
            raise IndexError(f"coordinate index {i} out of range 0..{spec.s - 1}")


def build_mu(spec, theta_k, k):
    """
    Location vector mu_k = (alpha + beta mu_x, mu_x).

    Args:
        spec (ModelSpec): Model
        theta_k (np.ndarray): Group block
        k (int): Zero-based group index

    Returns:
        np.ndarray: Vector of length l+1
    """
    l = spec.l
    beta = theta_k[:l]
    mu_x = theta_k[_mu_x_index(spec)]
    if spec.case is Case.INTERCEPT_KNOWN:
        alpha = np.asarray(spec.alpha[k])
    else:
        alpha = np.full(l, theta_k[spec.index('alpha')])
    return np.concatenate([alpha + beta * mu_x, [mu_x]])


def d_mu(spec, theta_k, i):
    """
    First derivative of mu_k with respect to coordinate i (zero-based).

    Returns:
        np.ndarray: Vector of length l+1
    """
    _check_index(spec, i)
    l = spec.l
    out = np.zeros(l + 1)
    if i < l:
        out[i] = theta_k[_mu_x_index(spec)]
    elif spec.has('alpha') and i == spec.index('alpha'):
        out[:l] = 1.0
    elif i == _mu_x_index(spec):
        out[:l] = theta_k[:l]
        out[l] = 1.0
    return out


def d2_mu(spec, theta_k, i, j):
    """Second derivative of mu_k: e_i for a (slope i, mu_x) pair, zero otherwise."""
    _check_index(spec, i, j)
    out = np.zeros(spec.l + 1)
    mu_x = _mu_x_index(spec)
    if i < spec.l and j == mu_x:
        out[i] = 1.0
    elif j < spec.l and i == mu_x:
        out[j] = 1.0
    return out


# ---------------------------------------------------------------------------
# dispersion matrix

def _sigma2_x(spec, theta_k, k):
    if spec.case is Case.LAMBDA_X_KNOWN:
        return spec.lambda_x[k] * theta_k[spec.index('sigma2_u')]
    return theta_k[spec.index('sigma2_x')]


def _d_sigma2_x(spec, i, k):
    """Derivative of sigma2_x with respect to coordinate i."""
    if spec.case is Case.LAMBDA_X_KNOWN:
        return spec.lambda_x[k] if i == spec.index('sigma2_u') else 0.0
    return 1.0 if i == spec.index('sigma2_x') else 0.0


def _diag(spec, theta_k, k):
    l = spec.l
    sigma2_u = theta_k[spec.index('sigma2_u')]
    if spec.case is Case.LAMBDA_E_KNOWN:
        head = np.asarray(spec.lambda_e[k]) * sigma2_u
    else:
        head = theta_k[spec.index('sigma2_e1'):spec.index('sigma2_e1') + l]
    return np.concatenate([head, [sigma2_u]])


def _d_diag(spec, i, k):
    l = spec.l
    out = np.zeros(l + 1)
    if i == spec.index('sigma2_u'):
        out[l] = 1.0
        if spec.case is Case.LAMBDA_E_KNOWN:
            out[:l] = spec.lambda_e[k]
    elif spec.case is not Case.LAMBDA_E_KNOWN and i >= spec.index('sigma2_e1'):
        out[i - spec.index('sigma2_e1')] = 1.0
    return out


def _c(spec, theta_k):
    return np.concatenate([theta_k[:spec.l], [1.0]])


def _sym_outer(i, c):
    """e_i c^T + c e_i^T."""
    out = np.zeros((c.size, c.size))
    out[i, :] += c
    out[:, i] += c
    return out


def build_sigma(spec, theta_k, k):
    """
    Dispersion matrix Sigma_k.

    Args:
        spec (ModelSpec): Model
        theta_k (np.ndarray): Group block
        k (int): Zero-based group index

    Returns:
        np.ndarray: Symmetric positive definite (l+1) x (l+1) matrix

    Raises:
        NotPositiveDefinite: If the result cannot be factored
    """
    c = _c(spec, theta_k)
    sigma = _sigma2_x(spec, theta_k, k) * np.outer(c, c) + np.diag(_diag(spec, theta_k, k))
    try:
        cholesky(sigma)
    except NotPositiveDefinite as e:
        raise NotPositiveDefinite(e.pivot, f"Sigma of group {k + 1} is not positive definite")
    return sigma


def d_sigma(spec, theta_k, i, k=0):
    """
    First derivative Sigma_(k)i of the dispersion matrix.

    Args:
        spec (ModelSpec): Model
        theta_k (np.ndarray): Group block
        i (int): Zero-based coordinate index
        k (int): Zero-based group index (selects the known constants)

    Returns:
        np.ndarray: Symmetric matrix
    """
    _check_index(spec, i)
    c = _c(spec, theta_k)
    out = _d_sigma2_x(spec, i, k) * np.outer(c, c) + np.diag(_d_diag(spec, i, k))
    if i < spec.l:
        out += _sigma2_x(spec, theta_k, k) * _sym_outer(i, c)
    return out


def d2_sigma(spec, theta_k, i, j, k=0):
    """
    Second derivative Sigma_(k)ij of the dispersion matrix.

    Non-zero only for (slope, slope) pairs and for (slope, variance-scale)
    pairs, the variance scale being sigma2_u (lambda_x known) or sigma2_x.
    """
    _check_index(spec, i, j)
    l = spec.l
    out = np.zeros((l + 1, l + 1))
    if i < l and j < l:
        sigma2_x = _sigma2_x(spec, theta_k, k)
        out[i, j] += sigma2_x
        out[j, i] += sigma2_x
    elif i < l or j < l:
        slope, other = (i, j) if i < l else (j, i)
        scale = _d_sigma2_x(spec, other, k)
        if scale:
            out = scale * _sym_outer(slope, _c(spec, theta_k))
    return out


def d_sigma_inv(sigma_inv, sigma_i):
    """
    Derivative of the inverse: -Sigma^-1 Sigma_i Sigma^-1.

    Raises:
        ValueError: On dimension mismatch
    """
    sigma_inv = np.asarray(sigma_inv, dtype=float)
    sigma_i = np.asarray(sigma_i, dtype=float)
    if sigma_inv.shape != sigma_i.shape:
        raise ValueError("Dimension mismatch between Sigma^-1 and Sigma_i")
    out = -sigma_inv @ sigma_i @ sigma_inv
    return 0.5 * (out + out.T)


def d2_sigma_inv(sigma_inv, sigma_i, sigma_j, sigma_ij):
    """
    Second derivative of the inverse.

    Returns S Sj S Si S + S Si S Sj S - S Sij S with S = Sigma^-1, the form
    with both cross terms (exact when Si Sj is not symmetric).
    """
    s = np.asarray(sigma_inv, dtype=float)
    mats = [np.asarray(a, dtype=float) for a in (sigma_i, sigma_j, sigma_ij)]
    if any(a.shape != s.shape for a in mats):
        raise ValueError("Dimension mismatch between Sigma^-1 and its derivatives")
    si, sj, sij = mats
    a = s @ si @ s
    b = s @ sj @ s
    out = b @ si @ s + a @ sj @ s - s @ sij @ s
    return 0.5 * (out + out.T)


# ---------------------------------------------------------------------------
# latent representation

def latent_representation(spec, theta_k, k):
    """
    Z = delta + Delta b with b = (x, e_1..e_l, u) ~ El(eta, Omega).

    Returns:
        tuple: (delta, Delta, eta, omega_diag) with Delta of shape (l+1, l+2)
    """
    l = spec.l
    beta = theta_k[:l]
    delta_mat = np.zeros((l + 1, l + 2))
    delta_mat[:l, 0] = beta
    delta_mat[:l, 1:l + 1] = np.eye(l)
    delta_mat[l, 0] = 1.0
    delta_mat[l, l + 1] = 1.0

    eta = np.zeros(l + 2)
    eta[0] = theta_k[_mu_x_index(spec)]
    omega = np.concatenate([[_sigma2_x(spec, theta_k, k)], _diag(spec, theta_k, k)])
    delta = build_mu(spec, theta_k, k) - delta_mat @ eta
    return delta, delta_mat, eta, omega
