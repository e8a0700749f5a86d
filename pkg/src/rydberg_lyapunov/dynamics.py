"""Lindblad integration with Lyapunov feedback, averaged noise and observables.

Two evaluation paths exist for the master equation.  ``lindblad_rhs`` works
directly on matrices and is the readable reference.  ``integrate`` compiles
the system once into superoperators acting on the row-major vectorised
density matrix (``vec(A rho B) = (A kron B^T) vec(rho)``) and steps that with
classical fourth-order Runge-Kutta.  The feedback amplitudes are linear
functionals of rho, so they are evaluated as dot products at every stage.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
import scipy.sparse as sp

from .models import EFF, OpenSystem
from .operators import (
    DensityMatrix,
    Operator,
    POSITIVITY_FLOOR,
    commutator,
    state_violations,
)

TOL_TRACE_RUN = 1e-9
TOL_HERM_RUN = 1e-9
RANGE_SLACK = 1e-8
CSV_COLUMNS = ("t", "F", "P", "v", "f1", "f2", "f3", "f4")
_DENSE_MAX_DIM = 8


class InvariantViolation(RuntimeError):
    """Raised when a recorded state leaves the physical state space.

    ``partial`` holds the trajectory recorded up to and including the
    offending point.
    """

    def __init__(self, message: str, time: float, partial: "Trajectory | None" = None):
        super().__init__(message)
        self.time = time
        self.partial = partial


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 0.01
    t_f: float = 100.0
    record_stride: int = 10
    verify_state: bool = False
    keep_states: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_f >= self.dt:
            raise ValueError(f"t_f={self.t_f} must be at least dt={self.dt}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError(f"record_stride must be a positive integer, got {self.record_stride}")
        steps = self.t_f / self.dt
        if abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
            raise ValueError(f"t_f={self.t_f} is not an integer multiple of dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_f / self.dt))


@dataclass(frozen=True)
class ControlSchedule:
    """Piecewise-linear control amplitudes f_m(t), one column per label."""

    times: np.ndarray
    values: np.ndarray
    labels: tuple[int, ...]

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float).reshape(len(times), -1)
        if values.shape[1] != len(self.labels):
            raise ValueError("schedule has one column per control label")
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("schedule times must be strictly increasing")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(self.labels))

    def __call__(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.times, self.values[:, j])
                         for j in range(len(self.labels))])


@dataclass(frozen=True)
class FeedbackRule:
    """How control amplitudes are produced.

    ``formula`` selects the fidelity-projector law ``-i <S|[H_m, rho]|S>`` or
    the square-root form ``Tr[sqrt(rho_s) (-i[H_m, rho]) sqrt(rho_s)]``.  With
    ``replay`` set, amplitudes are read from a stored schedule instead.
    """

    formula: Literal["projector", "sqrt"] = "projector"
    replay: ControlSchedule | None = None

    def __post_init__(self):
        if self.formula not in ("projector", "sqrt"):
            raise ValueError(f"unknown feedback formula {self.formula!r}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    fidelity: np.ndarray
    purity: np.ndarray
    speed: np.ndarray
    controls: np.ndarray  # (n_records, n_controls)
    control_labels: tuple[int, ...]
    final_state: DensityMatrix | None = None
    states: tuple[DensityMatrix, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.times)
        for name in ("fidelity", "purity", "speed"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        controls = np.asarray(self.controls, dtype=float).reshape(n, len(self.control_labels))
        object.__setattr__(self, "controls", controls)
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def control(self, label: int) -> np.ndarray:
        if label in self.control_labels:
            return self.controls[:, self.control_labels.index(label)]
        return np.zeros(len(self.times))

    def schedule(self) -> ControlSchedule:
        return ControlSchedule(self.times, self.controls, self.control_labels)

    def fidelity_at(self, t: float) -> float:
        if t < self.times[0] - 1e-9 or t > self.times[-1] + 1e-9:
            raise ValueError(f"t={t} outside recorded range [{self.times[0]}, {self.times[-1]}]")
        return float(np.interp(t, self.times, self.fidelity))

    def to_csv(self, path: str | os.PathLike | None = None) -> str:
        """Write ``t, F, P, v, f1..f4`` rows with 12 significant digits."""
        buf = io.StringIO()
        buf.write(",".join(CSV_COLUMNS) + "\n")
        cols = [self.times, self.fidelity, self.purity, self.speed]
        cols += [self.control(m) for m in (1, 2, 3, 4)]
        for row in zip(*cols):
            buf.write(",".join(f"{float(x):.12g}" for x in row) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def read_trajectory_csv(path: str | os.PathLike) -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    labels = (1, 2, 3, 4)
    return Trajectory(data[:, 0], data[:, 1], data[:, 2], data[:, 3], data[:, 4:8], labels)


# -- reference (matrix) evaluation -------------------------------------------


def _entries(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        return rho.entries
    if isinstance(rho, Operator):
        return rho.entries
    return np.asarray(rho, dtype=complex)


def noise_superoperator(channels: Sequence[tuple[Operator, float]],
                        rho: DensityMatrix | Operator) -> Operator:
    """sum_j -eta_j^2/2 [H_j, [H_j, rho]] (white-noise average)."""
    r = rho.op if isinstance(rho, DensityMatrix) else rho
    out = np.zeros_like(r.entries)
    for h, eta in channels:
        if not h.is_hermitian():
            raise ValueError("noise Hamiltonians must be Hermitian")
        out = out - 0.5 * eta**2 * commutator(h, commutator(h, r)).entries
    return Operator(r.space, out)


def lindblad_rhs(system: OpenSystem, rho: DensityMatrix | Operator, t: float = 0.0,
                 controls: Sequence[float] = ()) -> Operator:
    """d rho / dt for the given control amplitudes."""
    r = rho.op if isinstance(rho, DensityMatrix) else rho
    if r.space != system.space:
        raise ValueError(
            f"state on {r.space.factors} does not match system space {system.space.factors}"
        )
    if len(controls) != len(system.control_generators):
        raise ValueError(
            f"{len(controls)} control values for {len(system.control_generators)} generators"
        )
    h = system.hamiltonian(t)
    for f, gen in zip(controls, system.control_generators):
        h = h + float(f) * gen.generator
    x = r.entries
    out = -1j * (h.entries @ x - x @ h.entries)
    for op in system.collapse_ops:
        lop = op.entries
        ldl = lop.conj().T @ lop
        out = out + lop @ x @ lop.conj().T - 0.5 * (ldl @ x + x @ ldl)
    if system.noise_channels:
        out = out + noise_superoperator(system.noise_channels, r).entries
    return Operator(system.space, out)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def feedback_controls(system: OpenSystem, rho: DensityMatrix | Operator,
                      rule: FeedbackRule = FeedbackRule()) -> list[float]:
    """Lyapunov control amplitudes f_m for the current state."""
    x = _entries(rho)
    s = system.target
    out = []
    for gen in system.control_generators:
        comm = gen.generator.entries @ x - x @ gen.generator.entries
        if rule.formula == "projector":
            val = -1j * (s.conj() @ comm @ s)
        else:
            root = _psd_sqrt(np.outer(s, s.conj()))
            val = np.trace(root @ (-1j * comm) @ root)
        if abs(val.imag) > 1e-12:
            raise RuntimeError(
                f"control amplitude for H{gen.label} has imaginary part {val.imag:.3e}"
            )
        out.append(float(val.real))
    return out


def fidelity(rho: DensityMatrix | Operator, target: np.ndarray) -> float:
    """<target|rho|target>."""
    x = _entries(rho)
    target = np.asarray(target, dtype=complex)
    if target.shape[0] != x.shape[0]:
        raise ValueError("target and state dimensions differ")
    return float(np.real(target.conj() @ x @ target))


def purity(rho: DensityMatrix | Operator) -> float:
    x = _entries(rho)
    return float(np.real(np.sum(x * x.T)))


def _control_overlaps(system: OpenSystem, x: np.ndarray) -> list[float]:
    s = system.target
    return [float(np.real(-1j * (s.conj() @ (g.generator.entries @ x - x @ g.generator.entries) @ s)))
            for g in system.control_generators]


def speed(system: OpenSystem, rho: DensityMatrix | Operator,
          controls: Sequence[float] = ()) -> float:
    """Closed-form dF/dt of the effective model.

    gamma/4 <phi0|rho|phi0> plus sum_m f_m (-i <S|[H_m, rho]|S>).
    """
    if system.kind != "effective":
        raise ValueError(
            f"closed-form speed exists only for the effective model, not {system.kind!r}; "
            "use finite differences of the fidelity"
        )
    x = _entries(rho)
    if len(controls) != len(system.control_generators):
        raise ValueError("one control value per generator is required")
    phi = EFF["phi0"]
    v = system.params.gamma / 4 * float(np.real(x[phi, phi]))
    for f, overlap in zip(controls, _control_overlaps(system, x)):
        v += float(f) * overlap
    return v


# -- compiled superoperator path ---------------------------------------------


def _spre(a, ident):
    return sp.kron(sp.csr_matrix(a), ident, format="csr")


def _spost(a, ident):
    return sp.kron(ident, sp.csr_matrix(np.asarray(a).T), format="csr")


def hamiltonian_superoperator(h: np.ndarray) -> sp.csr_matrix:
    """-i[H, .] on the row-major vectorisation."""
    ident = sp.identity(h.shape[0], dtype=complex, format="csr")
    return (-1j * (_spre(h, ident) - _spost(h, ident))).tocsr()


def liouvillian(system: OpenSystem, include_drift: bool = True) -> sp.csr_matrix:
    """Time-independent part of the generator (drift, dissipators, noise)."""
    d = system.space.total_dim
    ident = sp.identity(d, dtype=complex, format="csr")
    total = sp.csr_matrix((d * d, d * d), dtype=complex)
    if include_drift:
        total = total + hamiltonian_superoperator(system.drift.entries)
    for op in system.collapse_ops:
        lop = op.entries
        if not np.any(lop):
            continue
        ldl = lop.conj().T @ lop
        total = total + sp.kron(sp.csr_matrix(lop), sp.csr_matrix(lop.conj()), format="csr")
        total = total - 0.5 * (_spre(ldl, ident) + _spost(ldl, ident))
    for h, eta in system.noise_channels:
        if eta == 0:
            continue
        hm = h.entries
        h2 = hm @ hm
        total = total - 0.5 * eta**2 * (
            _spre(h2, ident) + _spost(h2, ident)
            - 2 * sp.kron(sp.csr_matrix(hm), sp.csr_matrix(hm.T), format="csr"))
    total = total.tocsr()
    total.eliminate_zeros()
    return total


def _functional(m: np.ndarray) -> np.ndarray:
    """Row vector w with w @ vec(rho) = Tr[m rho]."""
    return np.ascontiguousarray(m.T).ravel()


class _Compiled:
    """Superoperator form of an OpenSystem under a feedback rule."""

    def __init__(self, system: OpenSystem, rule: FeedbackRule):
        d = system.space.total_dim
        dense = d <= _DENSE_MAX_DIM
        conv = (lambda m: m.toarray()) if dense else (lambda m: m)
        self.system = system
        self.rule = rule
        self.base = conv(liouvillian(system))
        self.drive = [(c, conv(hamiltonian_superoperator(h.entries)))
                      for c, h in system.drive_terms]
        self.gens = [conv(hamiltonian_superoperator(g.generator.entries))
                     for g in system.control_generators]
        s = system.target
        rho_s = np.outer(s, s.conj())
        self.w_fid = _functional(rho_s)
        weight = rho_s if rule.formula == "projector" else np.linalg.matrix_power(
            _psd_sqrt(rho_s), 2)
        rows = [_functional(weight @ g.generator.entries - g.generator.entries @ weight)
                for g in system.control_generators]
        # f = Re(-i Tr[(Q^2 H - H Q^2) rho]) = Im(w @ x)
        self.w_ctrl = np.array(rows) if rows else np.zeros((0, d * d), dtype=complex)
        self.replay = rule.replay
        if self.replay is not None and self.replay.labels != system.control_labels:
            raise ValueError(
                f"replay schedule labels {self.replay.labels} do not match "
                f"generators {system.control_labels}"
            )
        # the closed form ignores the noise term, so noisy runs use Tr[rho_s d rho/dt]
        self.effective = system.kind == "effective" and not any(
            eta for _, eta in system.noise_channels)
        if self.effective:
            phi = EFF["phi0"]
            self.phi_index = phi * d + phi
            self.gamma_quarter = system.params.gamma / 4

        n2 = d * d
        blocks = [self.base] + [sup for _, sup in self.drive] + self.gens
        self.n2 = n2
        self.n_drive = len(self.drive)
        self.n_gens = len(self.gens)
        if dense:
            self.stack = np.vstack(blocks + [self.w_ctrl])
        else:
            self.stack = sp.vstack(blocks + [sp.csr_matrix(self.w_ctrl)], format="csr")
        self.ctrl_offset = n2 * len(blocks)

    def evaluate(self, t: float, x: np.ndarray):
        """Return (d vec(rho)/dt, applied controls, feedback-law values)."""
        a = self.stack @ x
        n2 = self.n2
        y = a[:n2].copy()
        pos = n2
        for coeff, _ in self.drive:
            y += coeff(t) * a[pos:pos + n2]
            pos += n2
        law = a[self.ctrl_offset:].imag
        f = law if self.replay is None else self.replay(t)
        for fm in f:
            y += fm * a[pos:pos + n2]
            pos += n2
        return y, f, law

    def speed(self, x: np.ndarray, dx: np.ndarray, f: np.ndarray, law: np.ndarray) -> float:
        if self.effective:
            v = self.gamma_quarter * x[self.phi_index].real
            if len(f):
                v += float(np.dot(f, law))
            return v
        return float((self.w_fid @ dx).real)


def _check_record(x: np.ndarray, d: int, t: float, fid: float, pur: float,
                  positivity: bool) -> list[str]:
    rho = x.reshape(d, d)
    problems = state_violations(rho, herm_tol=TOL_HERM_RUN, trace_tol=TOL_TRACE_RUN,
                                floor=POSITIVITY_FLOOR, check_positivity=positivity)
    for name, val in (("fidelity", fid), ("purity", pur)):
        if not (-RANGE_SLACK <= val <= 1 + RANGE_SLACK):
            problems.append(f"{name} {val:.12g} outside [0, 1]")
    return problems


def integrate(system: OpenSystem, rho0: DensityMatrix, cfg: IntegratorConfig,
              rule: FeedbackRule = FeedbackRule()) -> Trajectory:
    """Fixed-step RK4 integration with state feedback evaluated at every stage."""
    if rho0.space != system.space:
        raise ValueError(
            f"initial state on {rho0.space.factors} does not match {system.space.factors}"
        )
    comp = _Compiled(system, rule)
    d = system.space.total_dim
    dt = cfg.dt
    n_steps = cfg.n_steps
    x = np.array(rho0.entries, dtype=complex).ravel()

    times, fids, purs, speeds, ctrls, states = [], [], [], [], [], []

    def snapshot():
        return Trajectory(np.array(times), np.array(fids), np.array(purs), np.array(speeds),
                          np.array(ctrls).reshape(len(times), len(system.control_generators)),
                          system.control_labels,
                          states=tuple(states) if cfg.keep_states else None)

    def record(n, t, x, dx, f, law):
        fid = float((comp.w_fid @ x).real)
        pur = float(np.vdot(x, x).real)
        first_or_last = n == 0 or n == n_steps
        problems = _check_record(x, d, t, fid, pur, cfg.verify_state or first_or_last)
        times.append(t)
        fids.append(fid)
        purs.append(pur)
        speeds.append(comp.speed(x, dx, f, law))
        ctrls.append(np.array(f, dtype=float))
        if cfg.keep_states:
            states.append(DensityMatrix.trusted(Operator(system.space, x.reshape(d, d))))
        if problems:
            raise InvariantViolation(
                f"state invariant violated at t={t:.6g}: " + "; ".join(problems),
                t, snapshot())

    half = 0.5 * dt
    sixth = dt / 6.0
    for n in range(n_steps + 1):
        t = n * dt
        k1, f1, law = comp.evaluate(t, x)
        if n % cfg.record_stride == 0 or n == n_steps:
            record(n, t, x, k1, f1, law)
        if n == n_steps:
            break
        k2 = comp.evaluate(t + half, x + half * k1)[0]
        k3 = comp.evaluate(t + half, x + half * k2)[0]
        k4 = comp.evaluate(t + dt, x + dt * k3)[0]
        x = x + sixth * (k1 + 2.0 * (k2 + k3) + k4)

    traj = snapshot()
    # the final point was validated by record() at run tolerances
    object.__setattr__(traj, "final_state",
                       DensityMatrix.trusted(Operator(system.space, x.reshape(d, d))))
    return traj


def time_to_threshold(traj: Trajectory, threshold: float) -> float | None:
    """First time F reaches ``threshold``, linearly interpolated between records."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    fid = traj.fidelity
    hits = np.nonzero(fid >= threshold)[0]
    if len(hits) == 0:
        return None
    i = int(hits[0])
    if i == 0:
        return float(traj.times[0])
    t0, t1 = traj.times[i - 1], traj.times[i]
    f0, f1 = fid[i - 1], fid[i]
    return float(t0 + (threshold - f0) * (t1 - t0) / (f1 - f0))
