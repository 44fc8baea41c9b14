"""Reduced-rank Gaussian-process model of the scalar field norm.

The field is approximated by ``f(p) = phi(p) @ w`` with ``w ~ N(0, diag(lam))``,
where ``phi`` are the Dirichlet Laplacian eigenfunctions on a box and ``lam``
is the squared-exponential spectral density evaluated at the square root of
each eigenvalue.  :func:`full_gp_predict` is the exact O(n^3) GP used as an
oracle for the approximation.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg


class IllConditionedError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class DomainBox:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("domain corners must be 3-vectors")
        if not all(h > l for l, h in zip(lo, hi)):
            raise ValueError(f"domain upper corner must exceed lower corner: {lo} / {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def sides(self):
        return np.subtract(self.upper, self.lower)

    def contains(self, p, tol=0.0):
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= np.asarray(self.lower) - tol) and np.all(p <= np.asarray(self.upper) + tol))

    @classmethod
    def cube_around(cls, lower, upper, margin):
        """Smallest cube holding the box ``[lower, upper]`` expanded by ``margin``."""
        lower = np.asarray(lower, dtype=float) - margin
        upper = np.asarray(upper, dtype=float) + margin
        side = float(np.max(upper - lower))
        centre = 0.5 * (lower + upper)
        return cls(tuple(centre - side / 2), tuple(centre + side / 2))


@dataclass(frozen=True)
class Hyperparameters:
    sigma_se: float
    l_se: float
    sigma_y: float

    def __post_init__(self):
        for name in ("sigma_se", "l_se"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        # zero measurement noise is allowed for data generation; estimators check
        if not self.sigma_y >= 0:
            raise ValueError("sigma_y must be non-negative")


@dataclass(frozen=True, eq=False)
class BasisModel:
    domain: DomainBox
    indices: np.ndarray  # (M, 3) positive ints
    eigenvalues: np.ndarray  # (M,), non-decreasing

    @property
    def M(self):
        return len(self.eigenvalues)


def eigenvalue(n, domain):
    n = np.asarray(n, dtype=float)
    return float(np.sum((np.pi * n / domain.sides) ** 2))


def _lam_key(lam):
    # equal eigenvalues from permuted triples can differ in the last bit
    return float(f"{lam:.12g}")


def select_basis_indices(M, domain):
    """Return the ``M`` index triples with the smallest eigenvalues.

    Ties are broken lexicographically on the triple.  The enumeration cap is
    grown until the M-th eigenvalue is strictly below every eigenvalue that
    lies just outside the enumerated block.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    cap = math.ceil((2 * M) ** (1 / 3)) + 3
    sides = domain.sides
    while True:
        cands = []
        for n in itertools.product(range(1, cap + 1), repeat=3):
            cands.append((_lam_key(eigenvalue(n, domain)), n))
        cands.sort()
        if len(cands) >= M:
            lam_m = cands[M - 1][0]
            # smallest eigenvalue with some n_d = cap + 1
            outside = min(
                float(np.sum((np.pi / sides) ** 2)) - (np.pi / sides[d]) ** 2 + (np.pi * (cap + 1) / sides[d]) ** 2
                for d in range(3)
            )
            if lam_m < outside:
                break
        cap += 2
    chosen = cands[:M]
    indices = np.array([n for _, n in chosen], dtype=int)
    lams = np.array([eigenvalue(n, domain) for n in indices])
    return BasisModel(domain=domain, indices=indices, eigenvalues=lams)


def _sin_args(p, basis):
    p = np.atleast_2d(np.asarray(p, dtype=float))
    lo = np.asarray(basis.domain.lower)
    sides = basis.domain.sides
    # (n, M, 3)
    return np.pi * basis.indices[None, :, :] * ((p - lo) / sides)[:, None, :]


def _norm_const(basis):
    return float(np.prod(np.sqrt(2.0 / basis.domain.sides)))


def phi(p, basis, return_inside=False):
    """Basis functions at ``p``; ``(M,)`` for one point or ``(n, M)`` for many.

    With ``return_inside=True`` also returns whether every point lies inside the
    domain.  Points outside are still evaluated.
    """
    p_arr = np.asarray(p, dtype=float)
    out = _norm_const(basis) * np.prod(np.sin(_sin_args(p_arr, basis)), axis=2)
    if p_arr.ndim == 1:
        out = out[0]
    if return_inside:
        pts = np.atleast_2d(p_arr)
        lo, hi = np.asarray(basis.domain.lower), np.asarray(basis.domain.upper)
        inside = bool(np.all((pts >= lo) & (pts <= hi)))
        return out, inside
    return out


def grad_phi(p, basis):
    """Gradient of each basis function at a single point, shape ``(M, 3)``."""
    args = _sin_args(p, basis)[0]  # (M, 3)
    s = np.sin(args)
    c = np.cos(args)
    scale = np.pi * basis.indices / basis.domain.sides  # (M, 3)
    out = np.empty_like(args)
    for d in range(3):
        others = [k for k in range(3) if k != d]
        out[:, d] = scale[:, d] * c[:, d] * s[:, others[0]] * s[:, others[1]]
    return _norm_const(basis) * out


def spectral_density_se(s, hyper):
    """Spectral density of the 3-D squared-exponential kernel."""
    s = np.asarray(s, dtype=float)
    l2 = hyper.l_se ** 2
    return hyper.sigma_se ** 2 * (2 * np.pi * l2) ** 1.5 * np.exp(-0.5 * s ** 2 * l2)


def prior_lambda(basis, hyper):
    """Diagonal of the weight prior covariance."""
    return spectral_density_se(np.sqrt(basis.eigenvalues), hyper)


def kernel_se(X1, X2, hyper):
    X1 = np.atleast_2d(X1)
    X2 = np.atleast_2d(X2)
    d2 = np.sum((X1[:, None, :] - X2[None, :, :]) ** 2, axis=2)
    return hyper.sigma_se ** 2 * np.exp(-0.5 * d2 / hyper.l_se ** 2)


def full_gp_predict(train_X, train_y, test_X, hyper):
    """Exact GP posterior mean and variance at ``test_X``."""
    test_X = np.atleast_2d(np.asarray(test_X, dtype=float))
    prior_var = np.full(len(test_X), hyper.sigma_se ** 2)
    train_X = np.asarray(train_X, dtype=float).reshape(-1, 3)
    train_y = np.asarray(train_y, dtype=float).ravel()
    if len(train_X) == 0:
        return np.zeros(len(test_X)), prior_var
    K = kernel_se(train_X, train_X, hyper)
    K[np.diag_indices_from(K)] += hyper.sigma_y ** 2 + 1e-10 * hyper.sigma_se ** 2
    try:
        chol = scipy.linalg.cho_factor(K, lower=True)
    except np.linalg.LinAlgError:
        raise IllConditionedError(
            f"kernel matrix not positive definite (condition estimate {np.linalg.cond(K):.3e})"
        ) from None
    Ks = kernel_se(test_X, train_X, hyper)
    mean = Ks @ scipy.linalg.cho_solve(chol, train_y)
    v = scipy.linalg.solve_triangular(chol[0], Ks.T, lower=True)
    var = prior_var - np.sum(v ** 2, axis=0)
    return mean, np.maximum(var, 0.0)


def reduced_rank_posterior(train_X, train_y, basis, hyper):
    """Posterior mean and covariance of the weights given direct field samples."""
    if hyper.sigma_y <= 0:
        raise ValueError("reduced-rank regression needs sigma_y > 0")
    Phi = phi(np.asarray(train_X, dtype=float).reshape(-1, 3), basis)
    lam = prior_lambda(basis, hyper)
    A = Phi.T @ Phi / hyper.sigma_y ** 2 + np.diag(1.0 / lam)
    chol = scipy.linalg.cho_factor(A)
    mean = scipy.linalg.cho_solve(chol, Phi.T @ np.asarray(train_y, dtype=float).ravel()) / hyper.sigma_y ** 2
    cov = scipy.linalg.cho_solve(chol, np.eye(basis.M))
    return mean, cov


def predict_field(X, w, basis, cov=None):
    """Field mean (and variance if ``cov`` is given) at positions ``X``."""
    Phi = np.atleast_2d(phi(np.asarray(X, dtype=float).reshape(-1, 3), basis))
    mean = Phi @ w
    if cov is None:
        return mean
    var = np.einsum("ij,jk,ik->i", Phi, cov, Phi)
    return mean, np.maximum(var, 0.0)
