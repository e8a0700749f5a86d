"""Zeno-subspace reduction of a strongly coupled Hamiltonian.

For ``H = H_c + K H_p`` with large ``K`` the dynamics splits into the
eigenspaces of ``H_p``.  ``zeno_decompose`` builds the eigenprojectors and the
block-diagonal Zeno Hamiltonian ``sum_n (K zeta_n P_n + P_n H_c P_n)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .models import (
    EFFECTIVE_SPACE,
    ModelParams,
    atom_cavity_coupling,
    build_effective_model,
    effective_embedding,
    full_space,
    pump_hamiltonian,
)
from .operators import Operator, SpaceDescriptor, TOL_HERM, compress, hermitian_eigensystem


@dataclass(frozen=True)
class ZenoDecomposition:
    projectors: tuple[Operator, ...]
    eigenvalues: tuple[float, ...]
    coupling: float
    zeno_hamiltonian: Operator

    def sector(self, zeta: float, tol: float = 1e-8) -> int:
        """Index of the projector whose eigenvalue is ``zeta``."""
        for i, z in enumerate(self.eigenvalues):
            if abs(z - zeta) <= tol:
                return i
        raise KeyError(f"no Zeno sector with eigenvalue {zeta}")


def cluster_eigenvalues(values: np.ndarray, cluster_tol: float) -> list[np.ndarray]:
    """Split sorted ``values`` into index groups separated by gaps > ``cluster_tol``."""
    groups = [[0]]
    for i in range(1, len(values)):
        if values[i] - values[i - 1] > cluster_tol:
            groups.append([i])
        else:
            groups[-1].append(i)
    return [np.array(g) for g in groups]


def zeno_decompose(h_c: Operator, h_p: Operator, K: float,
                   cluster_tol: float | None = None) -> ZenoDecomposition:
    """Eigenprojectors of ``h_p`` and the Zeno Hamiltonian of ``h_c + K h_p``.

    ``cluster_tol`` is an absolute eigenvalue gap; by default it is 1e-6 of
    the spectral range of ``h_p``.
    """
    if h_c.space != h_p.space:
        raise ValueError("H_c and H_p live on different spaces")
    if not h_c.is_hermitian(TOL_HERM):
        raise ValueError("H_c is not Hermitian")
    spec = hermitian_eigensystem(h_p)
    values, vectors = spec.eigenvalues, spec.eigenvectors
    spread = float(values[-1] - values[0])
    if cluster_tol is None:
        cluster_tol = 1e-6 * spread if spread > 0 else 1e-12
    if cluster_tol <= 0:
        raise ValueError("cluster_tol must be positive")
    if spread > 0 and cluster_tol > spread:
        warnings.warn(
            f"cluster_tol={cluster_tol:g} exceeds the spectral range {spread:g}; "
            "all eigenvalues merge into one trivial projector",
            stacklevel=2,
        )
    projectors, zetas = [], []
    hz = np.zeros_like(h_c.entries)
    for idx in cluster_eigenvalues(values, cluster_tol):
        v = vectors[:, idx]
        proj = v @ v.conj().T
        zeta = float(np.mean(values[idx]))
        projectors.append(Operator(h_p.space, proj))
        zetas.append(zeta)
        hz = hz + K * zeta * proj + proj @ h_c.entries @ proj
    return ZenoDecomposition(tuple(projectors), tuple(zetas), float(K),
                             Operator(h_p.space, hz))


def project_collapse_ops(decomp: ZenoDecomposition, ops: Sequence[Operator],
                         sector: int, basis: np.ndarray | None = None,
                         basis_space: SpaceDescriptor | None = None,
                         drop_tol: float = 1e-12) -> list[Operator]:
    """P L P for each collapse operator, restricted to one Zeno sector.

    If ``basis`` (orthonormal columns inside the sector) is given the result
    is expressed in that basis, i.e. ``V^dag L V``.  Operators whose norm
    falls below ``drop_tol`` are dropped.
    """
    if not 0 <= sector < len(decomp.projectors):
        raise IndexError(f"sector {sector} out of range ({len(decomp.projectors)} sectors)")
    proj = decomp.projectors[sector]
    out = []
    for op in ops:
        reduced = proj @ op @ proj
        if basis is not None:
            space = basis_space or SpaceDescriptor.of(("sector", basis.shape[1]))
            reduced = compress(reduced, basis, space)
        if reduced.norm() > drop_tol:
            out.append(reduced)
    return out


def _inside(proj: Operator, basis: np.ndarray, tol: float = 1e-10) -> bool:
    return bool(np.allclose(proj.entries @ basis, basis, atol=tol))


def full_model_zeno(p: ModelParams) -> ZenoDecomposition:
    """Decompose the full Hamiltonian with the cavity coupling as the strong part."""
    h_ac = atom_cavity_coupling(p)
    h_r = pump_hamiltonian(p)
    return zeno_decompose(h_r, h_ac / p.g, p.g)


def effective_hamiltonian_from_zeno(p: ModelParams) -> Operator:
    """Zero-eigenvalue sector of the Zeno Hamiltonian in the six-state basis."""
    decomp = full_model_zeno(p)
    sector = decomp.sector(0.0)
    basis = effective_embedding(full_space(p.cavity_truncation))
    if not _inside(decomp.projectors[sector], basis):
        raise RuntimeError("effective basis is not contained in the zero Zeno sector")
    return compress(decomp.zeno_hamiltonian, basis, EFFECTIVE_SPACE)


def zeno_check(p: ModelParams | None = None) -> float:
    """Max entrywise deviation between the derived and hand-written effective Hamiltonians."""
    p = p or ModelParams()
    derived = effective_hamiltonian_from_zeno(p)
    analytic = build_effective_model(p).drift
    return float(np.max(np.abs(derived.entries - analytic.entries)))
