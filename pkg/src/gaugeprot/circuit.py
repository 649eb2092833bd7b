"""Trotterized digital-circuit simulation of the protected quantum link model.

One Trotter step applies, in order: the exact kinetic layer exp(-i H_J dt),
the error layer (x-rotations on links, then matter pair gates j = 1..L),
and a single layer of z-rotations carrying both the mass term and V H_G.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import SpinBasis, check_state, eigh, phase_factors
from .evolve import Trajectory
from .gauge import GaugeSectorTable, ProtectionSequence, sector_map
from .model import ModelParams, build_hj

GOLDEN = (math.sqrt(5) - 1) / 2


class UnsupportedConfiguration(ValueError):
    """The requested Hamiltonian has no gate decomposition here."""


@dataclass(frozen=True)
class TrotterConfig:
    dt: float
    n_steps: int
    params: ModelParams
    sequence: ProtectionSequence | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"Trotter step must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"need at least one Trotter step, got {self.n_steps}")

    @property
    def t_f(self) -> float:
        return self.n_steps * self.dt

    layer_order = ("H_J", "H_1", "H_m+V*H_G")


@dataclass(frozen=True, eq=False)
class Gate:
    kind: str  # rz, rx, two_qubit_pp, exact_layer, global_phase
    qubits: tuple[int, ...]
    angle: float = 0.0
    generator: object = field(default=None, repr=False)

    def matrix(self) -> np.ndarray:
        """Local unitary of the gate (full-space for ``exact_layer``)."""
        if self.kind == "rz":
            return np.diag([np.exp(-0.5j * self.angle), np.exp(0.5j * self.angle)])
        if self.kind == "rx":
            c, s = math.cos(self.angle / 2), math.sin(self.angle / 2)
            return np.array([[c, -1j * s], [-1j * s, c]])
        if self.kind == "two_qubit_pp":
            c, s = math.cos(self.angle), math.sin(self.angle)
            u = np.eye(4, dtype=complex)
            u[0, 0] = u[3, 3] = c
            u[0, 3] = u[3, 0] = -1j * s
            return u
        if self.kind == "global_phase":
            return np.array([[np.exp(-1j * self.angle)]])
        if self.kind == "exact_layer":
            return self.generator.unitary()
        raise ValueError(f"unknown gate kind {self.kind!r}")


class ExactLayer:
    """exp(-i H dt) for a fixed Hermitian H, applied block by block."""

    def __init__(self, op, dt: float):
        spec = eigh(op)
        self.dim = spec.dim
        self.blocks = []
        for b in spec.blocks:
            v = b.eigenvectors
            u = (v * phase_factors(b.eigenvalues, dt)[None, :]) @ v.conj().T
            self.blocks.append((b.indices, u))

    def apply(self, psi: np.ndarray) -> np.ndarray:
        out = np.empty_like(psi)
        for idx, u in self.blocks:
            out[idx] = u @ psi[idx]
        return out

    def unitary(self) -> np.ndarray:
        full = np.zeros((self.dim, self.dim), dtype=complex)
        for idx, u in self.blocks:
            full[np.ix_(idx, idx)] = u
        return full


def z_layer_angles(params: ModelParams, sequence: ProtectionSequence | None, dt: float) -> tuple[np.ndarray, float]:
    """Per-qubit rz angles for exp(-i (H_m + V H_G) dt) and the leftover global phase.

    G_j = (-1)^j/2 (s^z_j + t^z_{j-1,j} + t^z_{j,j+1} + 1), so every qubit
    collects V c_j (-1)^j dt from each incident G_j; the constant terms give
    a global phase exp(-i V dt sum_j (-1)^j c_j / 2).
    """
    basis = params.basis
    angles = np.zeros(basis.n_qubits)
    for j in range(1, basis.L + 1):
        angles[basis.matter_qubit(j)] += params.mu * dt
    phase = 0.0
    if params.protection_kind == "linear" and params.V != 0:
        if sequence is None:
            raise ValueError("linear protection needs a coefficient sequence")
        c = sequence.coefficients
        for j in range(1, basis.L + 1):
            w = params.V * c[j - 1] * (-1) ** j * dt
            angles[basis.matter_qubit(j)] += w
            angles[basis.link_qubit(j - 1)] += w
            angles[basis.link_qubit(j)] += w
            phase += 0.5 * w
    elif params.protection_kind == "quadratic" and params.V != 0:
        raise UnsupportedConfiguration("quadratic protection is not a single-qubit layer")
    return angles, phase


def build_trotter_step(config: TrotterConfig, exact_layer: ExactLayer | None = None) -> list[Gate]:
    params = config.params
    if params.error_kind == "extreme":
        raise UnsupportedConfiguration("the extreme error term has no gate decomposition")
    basis = params.basis
    dt = config.dt
    gates = [Gate("exact_layer", tuple(range(basis.n_qubits)), dt, exact_layer or ExactLayer(build_hj(basis), dt))]
    lam = params.lam if params.error_kind == "local" else 0.0
    for j in range(1, basis.L + 1):
        gates.append(Gate("rx", (basis.link_qubit(j),), 2 * lam * dt))
    for j in range(1, basis.L + 1):
        gates.append(Gate("two_qubit_pp", (basis.matter_qubit(j), basis.matter_qubit(j + 1)), lam * dt))
    angles, phase = z_layer_angles(params, config.sequence, dt)
    for q, phi in enumerate(angles):
        gates.append(Gate("rz", (q,), float(phi)))
    gates.append(Gate("global_phase", (), phase))
    return gates


# ---------------------------------------------------------------- statevector kernels

def _apply_1q(psi: np.ndarray, u: np.ndarray, q: int, n: int) -> np.ndarray:
    s = psi.reshape(1 << q, 2, 1 << (n - q - 1))
    return np.einsum("ab,ibj->iaj", u, s).reshape(-1)


def _apply_pp(psi: np.ndarray, angle: float, q1: int, q2: int, n: int) -> np.ndarray:
    lo, hi = sorted((q1, q2))
    s = psi.reshape(1 << lo, 2, 1 << (hi - lo - 1), 2, 1 << (n - hi - 1)).copy()
    c, sn = math.cos(angle), math.sin(angle)
    a00 = s[:, 0, :, 0, :].copy()
    a11 = s[:, 1, :, 1, :].copy()
    s[:, 0, :, 0, :] = c * a00 - 1j * sn * a11
    s[:, 1, :, 1, :] = c * a11 - 1j * sn * a00
    return s.reshape(-1)


class CompiledStep:
    """A Trotter step with the diagonal z-layer fused into one phase vector."""

    def __init__(self, gates: Sequence[Gate], basis: SpinBasis):
        self.n = basis.n_qubits
        self.ops = []
        diag = None
        for g in gates:
            if g.kind in ("rz", "global_phase"):
                if diag is None:
                    diag = np.ones(basis.dim, dtype=complex)
                if g.kind == "rz":
                    z = basis.z_values(g.qubits[0])
                    diag *= np.exp(-0.5j * g.angle * z)
                else:
                    diag *= np.exp(-1j * g.angle)
                continue
            if diag is not None:
                self.ops.append(("diag", diag))
                diag = None
            self.ops.append((g.kind, g))
        if diag is not None:
            self.ops.append(("diag", diag))

    def apply(self, psi: np.ndarray) -> np.ndarray:
        for kind, op in self.ops:
            if kind == "diag":
                psi = op * psi
            elif kind == "exact_layer":
                psi = op.generator.apply(psi)
            elif kind == "rx":
                psi = _apply_1q(psi, op.matrix(), op.qubits[0], self.n)
            elif kind == "two_qubit_pp":
                psi = _apply_pp(psi, op.angle, op.qubits[0], op.qubits[1], self.n)
            else:
                raise ValueError(f"unknown gate kind {kind!r}")
        return psi


def step_unitary(config: TrotterConfig) -> np.ndarray:
    """Dense matrix of one Trotter step (for checks at small L)."""
    basis = config.params.basis
    step = CompiledStep(build_trotter_step(config), basis)
    eye = np.eye(basis.dim, dtype=complex)
    return np.stack([step.apply(eye[:, k]) for k in range(basis.dim)], axis=1)


def run_circuit(
    config: TrotterConfig,
    psi0: np.ndarray,
    table: GaugeSectorTable | None = None,
    exact_layer: ExactLayer | None = None,
) -> Trajectory:
    """Apply ``n_steps`` Trotter steps, reading out eps after each.

    ``epsilon_avg`` is the running mean of the per-step readouts.
    """
    basis = config.params.basis
    psi = check_state(psi0, basis.dim).copy()
    table = table or sector_map(basis)
    weights = table.violation_weights()
    step = CompiledStep(build_trotter_step(config, exact_layer), basis)
    eps = np.empty(config.n_steps)
    norms = np.empty(config.n_steps)
    for k in range(config.n_steps):
        psi = step.apply(psi)
        p = np.abs(psi) ** 2
        eps[k] = p @ weights
        norms[k] = math.sqrt(p.sum())
    times = config.dt * np.arange(1, config.n_steps + 1)
    avg = np.cumsum(eps) / np.arange(1, config.n_steps + 1)
    return Trajectory(times, eps, avg, config.params, config.sequence, norms)


def write_circuit_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t", "epsilon"])
        for k, (t, e) in enumerate(zip(traj.times, traj.epsilon), start=1):
            w.writerow([k, f"{t:.17g}", f"{e:.17g}"])


# ---------------------------------------------------------------- ideal protection strength

def v_ideal(dt: float, c_bar: float, xi: float) -> float:
    """pi / (2 c_bar dt) - xi."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return math.pi / (2 * c_bar * dt) - xi


class CircuitScanner:
    """Reusable circuit runs at fixed (params, dt) and varying V."""

    def __init__(self, params: ModelParams, sequence: ProtectionSequence | None, dt: float, t_f: float,
                 psi0: np.ndarray, statistic: str = "mean"):
        if statistic not in ("mean", "final"):
            raise ValueError("statistic must be 'mean' or 'final'")
        self.params = params
        self.sequence = sequence
        self.dt = dt
        self.n_steps = max(1, int(round(t_f / dt)))
        self.psi0 = psi0
        self.statistic = statistic
        self.table = sector_map(params.basis)
        self.layer = ExactLayer(build_hj(params.basis), dt)
        self._cache: dict[float, Trajectory] = {}

    def trajectory(self, V: float) -> Trajectory:
        V = float(V)
        if V not in self._cache:
            cfg = TrotterConfig(self.dt, self.n_steps, self.params.with_(V=V), self.sequence)
            self._cache[V] = run_circuit(cfg, self.psi0, self.table, self.layer)
        return self._cache[V]

    def __call__(self, V: float) -> float:
        tr = self.trajectory(V)
        return float(tr.epsilon_avg[-1] if self.statistic == "mean" else tr.epsilon[-1])


def golden_section_min(f, lo: float, hi: float, rel_tol: float = 0.01, max_iter: int = 200) -> float:
    """Minimizer of a unimodal f on [lo, hi] to relative tolerance ``rel_tol``."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if (b - a) <= rel_tol * 0.5 * (a + b):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def locate_v_ideal(scanner: CircuitScanner, V_grid: Sequence[float], rel_tol: float = 0.01) -> float:
    """Coarse scan over ``V_grid`` then golden-section refinement around the best point."""
    grid = np.asarray(sorted(V_grid), dtype=float)
    vals = np.array([scanner(V) for V in grid])
    k = int(np.argmin(vals))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    if lo == hi:
        return float(grid[k])
    return golden_section_min(scanner, lo, hi, rel_tol)


@dataclass(frozen=True)
class CollapseRow:
    dt: float
    V: float
    V_dt: float
    eps_avg: float
    eps_avg_rescaled: float
    eps_final: float


def collapse_scan(
    params: ModelParams,
    sequence: ProtectionSequence | None,
    psi0: np.ndarray,
    dts: Sequence[float],
    V_grids: Sequence[Sequence[float]],
    t_f: float = 20.0,
) -> list[CollapseRow]:
    """Rescaled surface (V dt, eps_avg / (J dt)^2) for every dt and V."""
    if len(dts) != len(V_grids):
        raise ValueError("need one V grid per dt")
    rows = []
    for dt, grid in zip(dts, V_grids):
        scan = CircuitScanner(params, sequence, dt, t_f, psi0)
        for V in grid:
            tr = scan.trajectory(V)
            e = float(tr.epsilon_avg[-1])
            rows.append(CollapseRow(dt, float(V), float(V) * dt, e, e / (params.J * dt) ** 2, float(tr.epsilon[-1])))
    return rows


def write_collapse_csv(rows: Sequence[CollapseRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dt", "V", "V_dt", "eps_avg", "eps_avg_rescaled", "eps_final"])
        for r in rows:
            w.writerow([f"{x:.17g}" for x in (r.dt, r.V, r.V_dt, r.eps_avg, r.eps_avg_rescaled, r.eps_final)])
