"""Builders for the two-Rydberg-atom cavity system and its reductions.

Rates are in units of the atom-cavity coupling ``g`` and times in units of
``1/g`` throughout.  Three concrete systems are provided:

* the full model: atoms A and B with levels (g, e, p, r) and a truncated
  cavity mode, with the Rydberg pair excitation entering through the
  effective antiblockade coupling ``lambda = 2 Xi**2 / Delta``;
* the effective model on the six states (gg, T, S, ee, rr, phi0), all in the
  cavity vacuum;
* the STIRAP comparison model: two Lambda atoms (g, e, P) in a cavity driven
  by Gaussian pump pulses.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .operators import (
    DensityMatrix,
    Operator,
    SpaceDescriptor,
    TOL_HERM,
    basis_ket,
    compress,
    local_operator,
    outer,
    plus_hc,
    projector,
    transition,
    zero,
)

ModelKind = Literal["full", "effective", "stirap"]

ATOM_LEVELS = ("g", "e", "p", "r")
G, E, P, R = range(4)
STIRAP_LEVELS = ("g", "e", "P")
EFFECTIVE_BASIS = ("gg", "T", "S", "ee", "rr", "phi0")
EFFECTIVE_SPACE = SpaceDescriptor.of(("zeno", 6))
EFF = {name: i for i, name in enumerate(EFFECTIVE_BASIS)}

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the Rydberg-atom cavity system, in units of g.

    ``U_rr`` defaults to the antiblockade value ``2 * Delta`` when left as
    ``None``.
    """

    g: float = 1.0
    Omega: float = 0.07
    omega: float = 0.02
    Xi: float = 5.0
    Delta: float = 100.0
    U_rr: float | None = None
    gamma: float = 0.1
    kappa: float = 0.0
    Gamma: float = 0.001
    cavity_truncation: int = 2

    def __post_init__(self):
        for name in ("g", "Omega", "omega", "Xi", "Delta", "gamma", "kappa", "Gamma"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite non-negative rate, got {value}")
        if self.g <= 0:
            raise ValueError("g must be positive")
        if self.U_rr is not None and (not math.isfinite(self.U_rr) or self.U_rr < 0):
            raise ValueError(f"U_rr must be a finite non-negative rate, got {self.U_rr}")
        if self.Xi > 0 and self.Delta == 0:
            raise ValueError("Delta must be positive when Xi > 0 (lambda = 2 Xi^2 / Delta)")
        if int(self.cavity_truncation) != self.cavity_truncation or self.cavity_truncation < 2:
            raise ValueError(
                f"cavity_truncation must be an integer >= 2, got {self.cavity_truncation}"
            )

    @property
    def lam(self) -> float:
        """Antiblockade coupling between |ee> and |rr>."""
        if self.Xi == 0:
            return 0.0
        return 2.0 * self.Xi**2 / self.Delta

    @property
    def rydberg_interaction(self) -> float:
        return 2.0 * self.Delta if self.U_rr is None else float(self.U_rr)

    @property
    def cooperativity(self) -> float:
        if self.gamma * self.kappa <= 0:
            raise ValueError("cooperativity g^2/(gamma kappa) needs gamma, kappa > 0")
        return self.g**2 / (self.gamma * self.kappa)

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class StirapParams:
    Omega0: float = 0.15
    t_o: float = 20.0
    t_c: float = 35.0
    t_f: float = 200.0
    g: float = 1.0

    def __post_init__(self):
        if self.t_c <= 0 or self.t_f <= 0:
            raise ValueError("t_c and t_f must be positive")
        if self.g <= 0:
            raise ValueError("g must be positive")

    def replace(self, **changes) -> "StirapParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class ControlGenerator:
    """Coherent control Hamiltonian ``generator`` (already scaled by ``mu``)."""

    generator: Operator
    mu: float
    label: int

    def __post_init__(self):
        if not self.generator.is_hermitian(TOL_HERM):
            raise ValueError(f"control generator H{self.label} is not Hermitian")


@dataclass(frozen=True)
class InitialStateSpec:
    o: float = 1.0
    model_kind: ModelKind = "effective"
    cavity_truncation: int = 2

    def __post_init__(self):
        if not (0.0 <= self.o <= 1.0):
            raise ValueError(f"mixing weight o must lie in [0, 1], got {self.o}")


@dataclass(frozen=True, eq=False)
class OpenSystem:
    """Everything the master-equation integrator needs.

    The Hamiltonian at time t is ``drift + sum(c(t) * op for c, op in drive_terms)``
    plus the feedback-weighted control generators.
    """

    kind: ModelKind
    space: SpaceDescriptor
    drift: Operator
    collapse_ops: tuple[Operator, ...]
    target: np.ndarray = field(repr=False)
    control_generators: tuple[ControlGenerator, ...] = ()
    noise_channels: tuple[tuple[Operator, float], ...] = ()
    drive_terms: tuple[tuple[Callable[[float], float], Operator], ...] = ()
    params: ModelParams | StirapParams | None = None

    def __post_init__(self):
        ops = [self.drift, *self.collapse_ops]
        ops += [c.generator for c in self.control_generators]
        ops += [h for h, _ in self.noise_channels]
        ops += [h for _, h in self.drive_terms]
        for op in ops:
            if op.space != self.space:
                raise ValueError(
                    f"operator on {op.space.factors} does not live on {self.space.factors}"
                )
        target = np.array(self.target, dtype=complex)
        if target.shape != (self.space.total_dim,):
            raise ValueError("target vector has the wrong dimension")
        target.setflags(write=False)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "collapse_ops", tuple(self.collapse_ops))
        object.__setattr__(self, "control_generators", tuple(self.control_generators))
        object.__setattr__(self, "noise_channels",
                           tuple((h, float(eta)) for h, eta in self.noise_channels))
        object.__setattr__(self, "drive_terms", tuple(self.drive_terms))

    def hamiltonian(self, t: float = 0.0) -> Operator:
        h = self.drift
        for coeff, op in self.drive_terms:
            h = h + coeff(t) * op
        return h

    def with_controls(self, generators: Sequence[ControlGenerator]) -> "OpenSystem":
        return dataclasses.replace(self, control_generators=tuple(generators))

    def with_noise(self, channels: Sequence[tuple[Operator, float]]) -> "OpenSystem":
        return dataclasses.replace(self, noise_channels=tuple(channels))

    @property
    def control_labels(self) -> tuple[int, ...]:
        return tuple(c.label for c in self.control_generators)


# -- spaces and embeddings -------------------------------------------------


def full_space(cavity_truncation: int = 2) -> SpaceDescriptor:
    return SpaceDescriptor.of(("A", 4), ("B", 4), ("cavity", cavity_truncation + 1))


def stirap_space(cavity_truncation: int = 2) -> SpaceDescriptor:
    return SpaceDescriptor.of(("A", 3), ("B", 3), ("cavity", cavity_truncation + 1))


def annihilation(n_max: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_max + 1)), 1).astype(complex)


def effective_embedding(space: SpaceDescriptor) -> np.ndarray:
    """Columns are |gg>, |T>, |S>, |ee>, |rr>, |phi0> (cavity vacuum) in ``space``."""
    k = lambda a, b: basis_ket(space, a, b, 0)  # noqa: E731
    cols = [
        k(G, G),
        (k(E, G) + k(G, E)) / SQRT2,
        (k(E, G) - k(G, E)) / SQRT2,
        k(E, E),
        k(R, R),
        (k(P, G) - k(G, P)) / SQRT2,
    ]
    return np.column_stack(cols)


def singlet(space: SpaceDescriptor) -> np.ndarray:
    """(|eg> - |ge>)/sqrt(2) in the cavity vacuum, for full or STIRAP spaces."""
    return (basis_ket(space, 1, 0, 0) - basis_ket(space, 0, 1, 0)) / SQRT2


def _eff_ket(name: str) -> np.ndarray:
    v = np.zeros(6, dtype=complex)
    v[EFF[name]] = 1.0
    return v


def effective_ket(name: str) -> np.ndarray:
    """Basis vector of the six-state effective space by name."""
    return _eff_ket(name)


# -- full model ----------------------------------------------------------


def _atom(space: SpaceDescriptor, atom: str, to: int, frm: int) -> Operator:
    dim = space.dims[space.index(atom)]
    return local_operator(space, atom, transition(dim, to, frm))


def cavity_annihilation(space: SpaceDescriptor) -> Operator:
    n = space.dims[space.index("cavity")]
    return local_operator(space, "cavity", annihilation(n - 1))


def atom_cavity_coupling(p: ModelParams, space: SpaceDescriptor | None = None) -> Operator:
    """sum_n g |p>_n<g| a + H.c."""
    space = space or full_space(p.cavity_truncation)
    a = cavity_annihilation(space)
    h = zero(space)
    for atom in ("A", "B"):
        h = h + p.g * (_atom(space, atom, P, G) @ a)
    return plus_hc(h)


def pump_hamiltonian(p: ModelParams, space: SpaceDescriptor | None = None) -> Operator:
    """Classical drives plus the antiblockade term (the weak part of the Hamiltonian)."""
    space = space or full_space(p.cavity_truncation)
    # Pump signs chosen so <T|H|phi0> = +Omega with phi0 = (|pg> - |gp>)/sqrt2.
    omega_a, omega_b = p.Omega, -p.Omega
    h = omega_a * _atom(space, "A", E, P) + omega_b * _atom(space, "B", E, P)
    for atom in ("A", "B"):
        h = h + p.omega * _atom(space, atom, G, E)
    ee_rr = _atom(space, "A", E, R) @ _atom(space, "B", E, R)
    h = h + p.lam * ee_rr
    return plus_hc(h)


def full_collapse_ops(p: ModelParams, space: SpaceDescriptor,
                      include_rydberg_decay: bool = True) -> tuple[Operator, ...]:
    ops = []
    for atom in ("A", "B"):
        ops.append(math.sqrt(p.gamma / 2) * _atom(space, atom, G, P))
        ops.append(math.sqrt(p.gamma / 2) * _atom(space, atom, E, P))
        if include_rydberg_decay:
            ops.append(math.sqrt(p.Gamma) * _atom(space, atom, E, R))
    ops.append(math.sqrt(p.kappa) * cavity_annihilation(space))
    return tuple(ops)


def build_full_model(p: ModelParams, *, include_rydberg_decay: bool = True) -> OpenSystem:
    """Two four-level atoms plus a cavity mode truncated at ``p.cavity_truncation`` photons.

    With ``include_rydberg_decay=False`` the two |e><r| decay channels are left
    out, which makes the full model directly comparable with the effective one.
    """
    space = full_space(p.cavity_truncation)
    drift = atom_cavity_coupling(p, space) + pump_hamiltonian(p, space)
    return OpenSystem(
        kind="full",
        space=space,
        drift=drift,
        collapse_ops=full_collapse_ops(p, space, include_rydberg_decay),
        target=singlet(space),
        params=p,
    )


# -- effective model -----------------------------------------------------


def build_effective_model(p: ModelParams) -> OpenSystem:
    space = EFFECTIVE_SPACE
    k = _eff_ket
    h = (p.Omega * outer(space, k("T"), k("phi0"))
         + SQRT2 * p.omega * outer(space, k("T"), k("gg"))
         + SQRT2 * p.omega * outer(space, k("T"), k("ee"))
         + p.lam * outer(space, k("ee"), k("rr")))
    collapse = (
        math.sqrt(p.gamma / 4) * outer(space, k("S"), k("phi0")),
        math.sqrt(p.gamma / 4) * outer(space, k("T"), k("phi0")),
        math.sqrt(p.gamma / 2) * outer(space, k("gg"), k("phi0")),
    )
    return OpenSystem(
        kind="effective",
        space=space,
        drift=plus_hc(h),
        collapse_ops=collapse,
        target=k("S"),
        params=p,
    )


def project_to_effective(op: Operator) -> Operator:
    """P H P expressed in the six-state effective basis."""
    return compress(op, effective_embedding(op.space), EFFECTIVE_SPACE)


# -- control and noise generators ------------------------------------------

_ACC_TRANSITIONS = {
    1: ("A", E, P),
    2: ("B", E, P),
    3: ("A", G, E),
    4: ("B", G, E),
}


def build_acc_generators(p: ModelParams, mus: Sequence[float],
                         model_kind: ModelKind = "effective") -> list[ControlGenerator]:
    """Coherent-control Hamiltonians H1..H4; entries with mu == 0 are skipped."""
    if len(mus) != 4:
        raise ValueError(f"expected four intensities mu1..mu4, got {len(mus)}")
    if model_kind not in ("full", "effective"):
        raise ValueError(f"unsupported model kind {model_kind!r}")
    space = full_space(p.cavity_truncation)
    gens = []
    for label, mu in enumerate(mus, start=1):
        if mu == 0:
            continue
        atom, to, frm = _ACC_TRANSITIONS[label]
        h = plus_hc(mu * _atom(space, atom, to, frm))
        if model_kind == "effective":
            h = project_to_effective(h)
        gens.append(ControlGenerator(h, float(mu), label))
    return gens


def build_noise_generators(p: ModelParams, etas: Sequence[float],
                           model_kind: ModelKind = "full") -> list[tuple[Operator, float]]:
    """Amplitude-noise Hamiltonians on Omega (atom A), omega (atom A) and U_rr."""
    if len(etas) != 3:
        raise ValueError(f"expected three noise intensities, got {len(etas)}")
    if not all(math.isfinite(e) for e in etas):
        raise ValueError(f"noise intensities must be finite, got {etas}")
    space = full_space(p.cavity_truncation)
    hs1 = plus_hc(p.Omega * _atom(space, "A", P, E))
    hs2 = plus_hc(p.omega * _atom(space, "A", G, E))
    # |rr><rr| acts on every photon number
    hs3 = p.rydberg_interaction * (_atom(space, "A", R, R) @ _atom(space, "B", R, R))
    channels = [hs1, hs2, hs3]
    if model_kind == "effective":
        channels = [project_to_effective(h) for h in channels]
    elif model_kind != "full":
        raise ValueError(f"unsupported model kind {model_kind!r}")
    return [(h, float(eta)) for h, eta in zip(channels, etas)]


# -- STIRAP comparison model -----------------------------------------------


def stirap_pulses(sp: StirapParams, t):
    """Pump Rabi frequencies (Omega_A(t), Omega_B(t))."""
    t = np.asarray(t, dtype=float)
    late = np.exp(-((t - sp.t_o - sp.t_f / 2) ** 2) / sp.t_c**2)
    early = np.exp(-((t + sp.t_o - sp.t_f / 2) ** 2) / sp.t_c**2)
    omega_a = sp.Omega0 / SQRT2 * late
    omega_b = sp.Omega0 / SQRT2 * late + sp.Omega0 * early
    if omega_a.ndim == 0:
        return float(omega_a), float(omega_b)
    return omega_a, omega_b


def build_stirap_model(sp: StirapParams, gamma: float, kappa: float,
                       cavity_truncation: int = 2) -> OpenSystem:
    """Two Lambda atoms (g, e, P) in a cavity with time-dependent pumps on e <-> P.

    The cavity annihilation operator is attached to the g <-> P coupling.  The
    pump on atom A enters with a relative minus sign so that the adiabatic
    dark state ends in the singlet rather than the triplet.
    """
    if gamma < 0 or kappa < 0:
        raise ValueError("decay rates must be non-negative")
    space = stirap_space(cavity_truncation)
    gs, es, ps = range(3)
    a = cavity_annihilation(space)
    coupling = zero(space)
    for atom in ("A", "B"):
        coupling = coupling + sp.g * (_atom(space, atom, ps, gs) @ a)
    drift = plus_hc(coupling)
    x_a = plus_hc(_atom(space, "A", ps, es))
    x_b = plus_hc(_atom(space, "B", ps, es))
    drive_terms = (
        (lambda t: -stirap_pulses(sp, t)[0], x_a),
        (lambda t: stirap_pulses(sp, t)[1], x_b),
    )
    collapse = []
    for atom in ("A", "B"):
        collapse.append(math.sqrt(gamma / 2) * _atom(space, atom, gs, ps))
        collapse.append(math.sqrt(gamma / 2) * _atom(space, atom, es, ps))
    collapse.append(math.sqrt(kappa) * a)
    return OpenSystem(
        kind="stirap",
        space=space,
        drift=drift,
        collapse_ops=tuple(collapse),
        target=singlet(space),
        drive_terms=drive_terms,
        params=sp,
    )


# -- initial states --------------------------------------------------------


def initial_state(spec: InitialStateSpec) -> DensityMatrix:
    """o |eg><eg| + (1 - o) |gg><gg| in the cavity vacuum."""
    o = spec.o
    if spec.model_kind == "effective":
        eg = (_eff_ket("T") + _eff_ket("S")) / SQRT2
        rho = o * projector(EFFECTIVE_SPACE, eg) + (1 - o) * projector(
            EFFECTIVE_SPACE, _eff_ket("gg"))
        return DensityMatrix(rho)
    if spec.model_kind == "full":
        space = full_space(spec.cavity_truncation)
    elif spec.model_kind == "stirap":
        space = stirap_space(spec.cavity_truncation)
    else:
        raise ValueError(f"unknown model kind {spec.model_kind!r}")
    eg = basis_ket(space, 1, 0, 0)
    gg = basis_ket(space, 0, 0, 0)
    return DensityMatrix(o * projector(space, eg) + (1 - o) * projector(space, gg))
