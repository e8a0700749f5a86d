"""Dense operator algebra on labeled composite Hilbert spaces.

All values here are immutable: the wrapped arrays are copied on construction
and marked read-only, so operators can be shared freely between workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

TOL_HERM = 1e-10
TOL_TRACE = 1e-9
POSITIVITY_FLOOR = -1e-8


def _frozen(array, dtype=complex) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SpaceDescriptor:
    """Ordered list of (label, dimension) tensor factors."""

    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        factors = tuple((str(label), int(dim)) for label, dim in self.factors)
        if not factors:
            raise ValueError("a space needs at least one factor")
        labels = [label for label, _ in factors]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate factor labels in {labels}")
        for label, dim in factors:
            if dim < 1:
                raise ValueError(f"factor {label!r} has non-positive dimension {dim}")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def of(cls, *factors: tuple[str, int]) -> "SpaceDescriptor":
        return cls(tuple(factors))

    @property
    def total_dim(self) -> int:
        return int(np.prod([dim for _, dim in self.factors]))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.factors)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no factor {label!r} in space {self.labels}") from None

    def concat(self, other: "SpaceDescriptor") -> "SpaceDescriptor":
        return SpaceDescriptor(self.factors + other.factors)

    def flat_index(self, *local: int) -> int:
        """Row-major index of a product basis state (first factor slowest)."""
        if len(local) != len(self.factors):
            raise ValueError(f"expected {len(self.factors)} indices, got {len(local)}")
        return int(np.ravel_multi_index(tuple(local), self.dims))


@dataclass(frozen=True, eq=False)
class Operator:
    """Square complex matrix acting on ``space``."""

    space: SpaceDescriptor
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        entries = _frozen(self.entries)
        n = self.space.total_dim
        if entries.shape != (n, n):
            raise ValueError(
                f"operator shape {entries.shape} does not match space dimension {n}"
            )
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.space.total_dim

    def _check_same_space(self, other: "Operator", what: str):
        if self.space != other.space:
            raise ValueError(
                f"{what}: space mismatch {self.space.factors} vs {other.space.factors}"
            )

    def __add__(self, other: "Operator") -> "Operator":
        self._check_same_space(other, "addition")
        return Operator(self.space, self.entries + other.entries)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check_same_space(other, "subtraction")
        return Operator(self.space, self.entries - other.entries)

    def __neg__(self) -> "Operator":
        return Operator(self.space, -self.entries)

    def __mul__(self, scalar) -> "Operator":
        if isinstance(scalar, Operator):
            raise TypeError("use @ for operator products")
        return Operator(self.space, scalar * self.entries)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "Operator":
        return Operator(self.space, self.entries / scalar)

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check_same_space(other, "product")
            return Operator(self.space, self.entries @ other.entries)
        vec = np.asarray(other)
        if vec.shape[0] != self.dim:
            raise ValueError(f"vector of length {vec.shape[0]} on space of dim {self.dim}")
        return self.entries @ vec

    def dag(self) -> "Operator":
        return Operator(self.space, self.entries.conj().T)

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def norm(self) -> float:
        """Frobenius norm."""
        return float(np.linalg.norm(self.entries))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T), initial=0.0))

    def is_hermitian(self, tol: float = TOL_HERM) -> bool:
        return self.hermiticity_error() <= tol

    def allclose(self, other: "Operator", atol: float = 1e-12) -> bool:
        return self.space == other.space and np.allclose(
            self.entries, other.entries, rtol=0.0, atol=atol
        )

    def __repr__(self):
        return f"Operator(space={self.space.factors}, norm={self.norm():.6g})"


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A validated quantum state: Hermitian, unit trace, positive semidefinite."""

    op: Operator

    def __post_init__(self):
        problems = state_violations(self.op.entries)
        if problems:
            raise ValueError("invalid density matrix: " + "; ".join(problems))

    @property
    def space(self) -> SpaceDescriptor:
        return self.op.space

    @property
    def entries(self) -> np.ndarray:
        return self.op.entries

    @classmethod
    def trusted(cls, op: Operator) -> "DensityMatrix":
        """Wrap ``op`` without re-running the checks (caller has validated it)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "op", op)
        return obj

    @classmethod
    def from_ket(cls, space: SpaceDescriptor, ket: np.ndarray) -> "DensityMatrix":
        ket = np.asarray(ket, dtype=complex)
        ket = ket / np.linalg.norm(ket)
        return cls(Operator(space, np.outer(ket, ket.conj())))

    @classmethod
    def maximally_mixed(cls, space: SpaceDescriptor) -> "DensityMatrix":
        n = space.total_dim
        return cls(Operator(space, np.eye(n) / n))


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _frozen(self.eigenvalues, float))
        object.__setattr__(self, "eigenvectors", _frozen(self.eigenvectors))


def state_violations(rho: np.ndarray, *, herm_tol: float = TOL_HERM,
                     trace_tol: float = TOL_TRACE,
                     floor: float = POSITIVITY_FLOOR,
                     check_positivity: bool = True) -> list[str]:
    """Return human-readable descriptions of every violated state invariant."""
    problems = []
    herm = float(np.max(np.abs(rho - rho.conj().T), initial=0.0))
    if herm > herm_tol:
        problems.append(f"hermiticity error {herm:.3e} > {herm_tol:.0e}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        problems.append(f"trace {tr.real:.12g}{tr.imag:+.3e}j deviates from 1 by "
                        f"{abs(tr - 1.0):.3e} > {trace_tol:.0e}")
    if check_positivity:
        lam_min = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
        if lam_min < floor:
            problems.append(f"minimum eigenvalue {lam_min:.3e} < {floor:.0e}")
    return problems


def identity(space: SpaceDescriptor) -> Operator:
    return Operator(space, np.eye(space.total_dim))


def zero(space: SpaceDescriptor) -> Operator:
    return Operator(space, np.zeros((space.total_dim,) * 2))


def tensor_product(a: Operator, b: Operator) -> Operator:
    """Kronecker product; ``a``'s indices vary slowest."""
    return Operator(a.space.concat(b.space), np.kron(a.entries, b.entries))


def tensor(*ops: Operator) -> Operator:
    return reduce(tensor_product, ops)


def commutator(a: Operator, b: Operator) -> Operator:
    if a.space != b.space:
        raise ValueError(
            f"commutator: space mismatch {a.space.factors} vs {b.space.factors}"
        )
    return Operator(a.space, a.entries @ b.entries - b.entries @ a.entries)


def hermitian_eigensystem(a: Operator, tol: float = TOL_HERM) -> Spectrum:
    """Ascending eigenvalues and orthonormal eigenvectors of a Hermitian operator."""
    err = a.hermiticity_error()
    if err > tol:
        raise ValueError(f"operator is not Hermitian (max |A - A^dag| = {err:.3e})")
    herm = 0.5 * (a.entries + a.entries.conj().T)
    w, v = np.linalg.eigh(herm)
    return Spectrum(w, v)


def expectation(rho: DensityMatrix | Operator, a: Operator) -> complex:
    """Tr[rho a]."""
    r = rho.op if isinstance(rho, DensityMatrix) else rho
    if r.space != a.space:
        raise ValueError(
            f"expectation: space mismatch {r.space.factors} vs {a.space.factors}"
        )
    # Tr[rho a] = sum_ij rho_ij a_ji
    return complex(np.sum(r.entries * a.entries.T))


def local_operator(space: SpaceDescriptor, label: str, matrix) -> Operator:
    """Embed a single-factor matrix into ``space`` (identity on other factors)."""
    pos = space.index(label)
    matrix = np.asarray(matrix, dtype=complex)
    mats = [matrix if i == pos else np.eye(dim) for i, dim in enumerate(space.dims)]
    return Operator(space, reduce(np.kron, mats))


def basis_ket(space: SpaceDescriptor, *local: int) -> np.ndarray:
    ket = np.zeros(space.total_dim, dtype=complex)
    ket[space.flat_index(*local)] = 1.0
    return ket


def outer(space: SpaceDescriptor, ket: np.ndarray, bra: np.ndarray) -> Operator:
    """|ket><bra| on ``space``."""
    return Operator(space, np.outer(ket, np.conj(bra)))


def projector(space: SpaceDescriptor, ket: np.ndarray) -> Operator:
    return outer(space, ket, ket)


def transition(dim: int, to: int, frm: int) -> np.ndarray:
    """Single-factor matrix |to><frm|."""
    m = np.zeros((dim, dim), dtype=complex)
    m[to, frm] = 1.0
    return m


def plus_hc(op: Operator) -> Operator:
    return op + op.dag()


def compress(op: Operator, basis: np.ndarray, space: SpaceDescriptor) -> Operator:
    """Matrix of ``op`` in the orthonormal column ``basis``: V^dag A V."""
    basis = np.asarray(basis, dtype=complex)
    return Operator(space, basis.conj().T @ op.entries @ basis)


def orthonormal(vectors: Iterable[np.ndarray], tol: float = 1e-10) -> bool:
    v = np.column_stack(list(vectors))
    return bool(np.allclose(v.conj().T @ v, np.eye(v.shape[1]), atol=tol))


def sum_operators(space: SpaceDescriptor, ops: Sequence[Operator]) -> Operator:
    total = zero(space)
    for op in ops:
        total = total + op
    return total
