import math
import numpy as np
import pytest

from rydberg_lyapunov.models import (
    EFF,
    EFFECTIVE_SPACE,
    ModelParams,
    build_full_model,
    effective_embedding,
    effective_ket,
    full_collapse_ops,
    full_space,
)
from rydberg_lyapunov.operators import Operator, SpaceDescriptor, identity, zero
from rydberg_lyapunov.zeno import (
    effective_hamiltonian_from_zeno,
    full_model_zeno,
    project_collapse_ops,
    zeno_check,
    zeno_decompose,
)

QUBIT = SpaceDescriptor.of(("q", 2))
SX = Operator(QUBIT, [[0, 1], [1, 0]])
SZ = Operator(QUBIT, [[1, 0], [0, -1]])


def test_pauli_drive_suppressed():
    dec = zeno_decompose(SX, SZ, 10.0)
    assert dec.eigenvalues == (-1.0, 1.0)
    for proj in dec.projectors:
        assert (proj @ SX @ proj).norm() == 0
    p_minus, p_plus = dec.projectors
    assert dec.zeno_hamiltonian.allclose(10.0 * (p_plus - p_minus))


def test_no_strong_part():
    dec = zeno_decompose(SX, zero(QUBIT), 5.0)
    assert len(dec.projectors) == 1
    assert dec.projectors[0].allclose(identity(QUBIT))
    assert dec.zeno_hamiltonian.allclose(SX)


def test_oversized_cluster_tol_warns():
    with pytest.warns(UserWarning, match="cluster_tol"):
        dec = zeno_decompose(SX, SZ, 1.0, cluster_tol=5.0)
    assert len(dec.projectors) == 1


def test_rejects_non_hermitian():
    bad = Operator(QUBIT, [[0, 1], [0, 0]])
    with pytest.raises(ValueError):
        zeno_decompose(bad, SZ, 1.0)
    with pytest.raises(ValueError):
        zeno_decompose(SX, bad, 1.0)


@pytest.fixture(scope="module")
def dec():
    return full_model_zeno(ModelParams(kappa=0.1))


class TestFullModelSectors:
    p = ModelParams(kappa=0.1)

    def test_completeness_and_orthogonality(self, dec):
        n = dec.projectors[0].dim
        total = sum(p.entries for p in dec.projectors)
        np.testing.assert_allclose(total, np.eye(n), atol=1e-10)
        for i, a in enumerate(dec.projectors):
            for j, b in enumerate(dec.projectors):
                expected = a.entries if i == j else np.zeros((n, n))
                np.testing.assert_allclose(a.entries @ b.entries, expected, atol=1e-10)

    def test_zeno_hamiltonian_hermitian(self, dec):
        assert dec.zeno_hamiltonian.is_hermitian()

    def test_jaynes_cummings_eigenvalues(self, dec):
        expected = sorted({0.0, 1.0, -1.0, math.sqrt(2), -math.sqrt(2), 2.0, -2.0,
                           math.sqrt(6), -math.sqrt(6)})
        np.testing.assert_allclose(sorted(dec.eigenvalues), expected, atol=1e-9)

    def test_reproduces_effective_matrix(self):
        h = effective_hamiltonian_from_zeno(self.p)
        assert h.entries[EFF["T"], EFF["phi0"]] == pytest.approx(self.p.Omega, abs=1e-8)
        assert zeno_check(self.p) <= 1e-8

    def test_other_parameters(self):
        assert zeno_check(ModelParams(Omega=0.03, omega=0.05, Xi=3.0, Delta=50.0)) <= 1e-8

    def test_cavity_decay_vanishes_in_vacuum_sector(self, dec):
        space = full_space(self.p.cavity_truncation)
        basis = effective_embedding(space)
        kappa_op = build_full_model(self.p).collapse_ops[-1]
        assert kappa_op.norm() > 0
        out = project_collapse_ops(dec, [kappa_op], dec.sector(0.0), basis, EFFECTIVE_SPACE)
        assert out == []  # dropped: zero norm

    def test_atomic_decay_projection(self, dec):
        space = full_space(self.p.cavity_truncation)
        ops = full_collapse_ops(self.p, space)
        (l_gp_a,) = project_collapse_ops(dec, [ops[0]], dec.sector(0.0),
                                         effective_embedding(space), EFFECTIVE_SPACE)
        amp = effective_ket("gg") @ l_gp_a.entries @ effective_ket("phi0")
        assert abs(amp) == pytest.approx(math.sqrt(self.p.gamma / 2) / math.sqrt(2))


def test_commuting_collapse_unchanged():
    dec = zeno_decompose(SX, SZ, 3.0)
    lop = Operator(QUBIT, [[0.5, 0], [0, 0.2]])
    out = project_collapse_ops(dec, [lop], 0) + project_collapse_ops(dec, [lop], 1)
    assert (out[0] + out[1]).allclose(lop)


def test_sector_index_checked():
    dec = zeno_decompose(SX, SZ, 3.0)
    with pytest.raises(IndexError):
        project_collapse_ops(dec, [SX], 5)
