"""Benchmark covariance families and Gaussian sampling utilities.

Specs are declarative; :class:`CovarianceModel` realizes one as a factor L
with L L' = Sigma, which is all that sampling needs.  Eigenvalues and basis
are exposed for inspection and tests.  The eigenvalue families are
normalized so their smallest eigenvalue is exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "CovarianceModel",
    "CovarianceSpec",
    "build_covariance",
    "sample_gaussian",
    "sample_on_mahalanobis_sphere",
]

KINDS = (
    "identity",
    "sigma1",
    "sigma2",
    "sigma3",
    "sigma4",
    "exp_decay",
    "random_gram",
    "custom",
)


@dataclass(frozen=True)
class CovarianceSpec:
    """Declarative description of a covariance matrix.

    ``rotation_seed`` applies a Haar-random orthogonal change of basis so
    diagonal families stop being axis-aligned.  ``random_gram`` draws a
    fresh A'A with standard-normal A every time a model is built, so
    experiment replicates each see their own matrix.
    """

    kind: str
    d: int
    rotation_seed: int | None = None
    custom_eigenvalues: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if self.d < 2:
            raise ValueError(f"dimension must be >= 2, got {self.d}")
        if self.kind == "custom":
            if not self.custom_eigenvalues:
                raise ValueError("custom covariance requires eigenvalues")
            if any(v <= 0.0 for v in self.custom_eigenvalues):
                raise ValueError("custom eigenvalues must all be positive")
            if len(self.custom_eigenvalues) != self.d:
                raise ValueError("need exactly d custom eigenvalues")

    @property
    def is_random(self) -> bool:
        return self.kind == "random_gram"


def _family_eigenvalues(spec: CovarianceSpec) -> np.ndarray:
    d = spec.d
    big = float(d) ** 2
    if spec.kind == "identity":
        return np.ones(d)
    if spec.kind == "sigma1":
        return np.concatenate([np.ones(d // 2), np.full(d - d // 2, big)])
    if spec.kind == "sigma2":
        return np.linspace(1.0, big, d)
    if spec.kind == "sigma3":
        return np.concatenate([np.ones(d - 1), [big]])
    if spec.kind == "sigma4":
        return np.linspace(big, 2.0, d) / np.linspace(big, 1.0, d)
    if spec.kind == "custom":
        return np.asarray(spec.custom_eigenvalues, dtype=float)
    raise ValueError(f"{spec.kind!r} has no closed-form eigenvalues")


def _haar_orthogonal(d: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def _exp_decay_matrix(d: int) -> np.ndarray:
    idx = np.arange(d)
    return np.exp(-np.abs(idx[:, None] - idx[None, :]) / d)


class CovarianceModel:
    """A realized covariance: sampling factor plus spectral data."""

    def __init__(
        self,
        spec: CovarianceSpec,
        eigenvalues: np.ndarray | None,
        basis: np.ndarray | None,
        factor: np.ndarray | None,
    ):
        self.spec = spec
        self._eigenvalues = eigenvalues
        self.basis = basis  # None marks axis-aligned eigenvectors
        # factor rows act on standard-normal vectors: x = factor @ z.
        # None means the identity; a 1-d factor is a diagonal scale.
        self.factor = factor

    @classmethod
    def from_spec(
        cls, spec: CovarianceSpec, rng: np.random.Generator | None = None
    ) -> "CovarianceModel":
        rotation = (
            _haar_orthogonal(spec.d, spec.rotation_seed)
            if spec.rotation_seed is not None
            else None
        )
        if spec.kind == "random_gram":
            if rng is None:
                raise ValueError("random_gram covariance needs a random stream")
            amat = rng.standard_normal((spec.d, spec.d))
            factor = amat.T if rotation is None else rotation @ amat.T
            return cls(spec, eigenvalues=None, basis=None, factor=factor)
        if spec.kind == "exp_decay":
            eigenvalues, vectors = np.linalg.eigh(_exp_decay_matrix(spec.d))
            basis = vectors if rotation is None else rotation @ vectors
            factor = basis * np.sqrt(eigenvalues)
            return cls(spec, eigenvalues, basis, factor)
        eigenvalues = _family_eigenvalues(spec)
        if spec.kind == "identity" and rotation is None:
            return cls(spec, eigenvalues, basis=None, factor=None)
        if rotation is None:
            return cls(spec, eigenvalues, basis=None, factor=np.sqrt(eigenvalues))
        return cls(spec, eigenvalues, rotation, rotation * np.sqrt(eigenvalues))

    @property
    def d(self) -> int:
        return self.spec.d

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        if self._eigenvalues is not None:
            return self._eigenvalues
        gram = self.factor @ self.factor.T
        return np.linalg.eigvalsh(gram)

    def transform(self, z: np.ndarray) -> np.ndarray:
        """Map standard-normal draws (rows) to covariance-Sigma draws."""
        if self.factor is None:
            return z
        if self.factor.ndim == 1:
            return z * self.factor
        return z @ self.factor.T

    def mahalanobis_norm(self, x: np.ndarray) -> float:
        if self.factor is None:
            return float(np.linalg.norm(x))
        if self.factor.ndim == 1:
            return float(np.linalg.norm(x / self.factor))
        return float(np.linalg.norm(np.linalg.solve(self.factor, x)))


def build_covariance(
    spec: CovarianceSpec, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, np.ndarray | None]:
    """Realize a spec and return (eigenvalues ascending, basis).

    A ``None`` basis marks axis-aligned eigenvectors (identity basis).
    """
    model = CovarianceModel.from_spec(spec, rng)
    order = np.argsort(model.eigenvalues)
    eigenvalues = np.asarray(model.eigenvalues, dtype=float)[order]
    basis = model.basis
    if basis is not None:
        basis = basis[:, order] if basis.shape[1] == order.size else basis
    elif model.spec.kind == "random_gram":
        gram = model.factor @ model.factor.T
        _, basis = np.linalg.eigh(gram)
    return eigenvalues, basis


def sample_gaussian(
    n: int, model: CovarianceModel, rng: np.random.Generator
) -> np.ndarray:
    """n rows from N(0, Sigma); n = 1 is allowed for point generation."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    return model.transform(rng.standard_normal((n, model.d)))


def sample_on_mahalanobis_sphere(
    model: CovarianceModel, t: float, rng: np.random.Generator
) -> np.ndarray:
    """A point with Mahalanobis norm exactly t, uniform on the Sigma-sphere."""
    if t <= 0.0:
        raise ValueError(f"radius must be positive, got {t}")
    while True:
        z = rng.standard_normal(model.d)
        norm = np.linalg.norm(z)
        if norm > 0.0:
            break
    return model.transform((t / norm) * z)
