"""Continuous-time quench dynamics: gauge violation, long-time averages, Zeno limit."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .core import (
    Operator,
    SpectralDecomposition,
    check_state,
    eigh,
    evolve_many,
    evolve_with_spectrum,
    phase_factors,
)
from .gauge import GaugeSectorTable, ProtectionSequence, sector_energies, sector_map
from .model import ModelParams, assemble, build_h0, build_h1

DEGENERACY_GAP = 1e-12
T_INFINITE = 1e10


class ApproximateResultWarning(UserWarning):
    """The diagonal ensemble is not the exact long-time limit (degenerate spectrum)."""


def default_time_grid(n: int = 200, t_min: float = 1e-2, t_max: float = 1e10) -> np.ndarray:
    return np.logspace(np.log10(t_min), np.log10(t_max), n)


def violation_weights(L: int, table: GaugeSectorTable | None = None) -> np.ndarray:
    """Diagonal of (1/L) sum_j G_j^2 in the computational basis."""
    if table is None:
        from .core import SpinBasis

        table = sector_map(SpinBasis(L))
    return table.violation_weights()


def gauge_violation(psi: np.ndarray, gauss_ops: Sequence[Operator] | np.ndarray) -> float:
    """(1/L) sum_j <psi|G_j^2|psi>.

    ``gauss_ops`` is either the list of diagonal G_j operators or the
    precomputed weight vector from :func:`violation_weights`.
    """
    psi = np.asarray(psi)
    if isinstance(gauss_ops, np.ndarray):
        weights = gauss_ops
    else:
        ops = list(gauss_ops)
        if any(not op.diagonal for op in ops):
            raise ValueError("Gauss generators must be diagonal operators")
        weights = sum(np.real(op.data) ** 2 for op in ops) / len(ops)
    if weights.shape != psi.shape:
        raise ValueError(f"state dimension {psi.shape} does not match operator dimension {weights.shape}")
    return float(np.real(np.abs(psi) ** 2 @ weights))


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    epsilon: np.ndarray
    epsilon_avg: np.ndarray
    params: ModelParams | None = None
    sequence: ProtectionSequence | None = None
    norms: np.ndarray | None = field(default=None, repr=False)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "epsilon", "epsilon_avg"])
            for row in zip(self.times, self.epsilon, self.epsilon_avg):
                w.writerow([f"{x:.17g}" for x in row])


def running_average_trapezoid(times: np.ndarray, eps: np.ndarray, eps0: float) -> np.ndarray:
    """(1/t) int_0^t eps(s) ds by the trapezoid rule with eps(0) = eps0 prepended."""
    t = np.concatenate([[0.0], times])
    e = np.concatenate([[eps0], eps])
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (e[1:] + e[:-1]) * np.diff(t))])
    return integral[1:] / times


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("time grid must be a non-empty 1-D array")
    if not np.all(np.isfinite(times)):
        raise ValueError("time grid contains non-finite values")
    if np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be positive and strictly increasing")
    return times


class ObservableDynamics:
    """Exact long-time statistics of a diagonal observable for one quench.

    Holds the eigenbasis matrix of the observable restricted to the blocks
    the initial state touches, so running averages at any t cost O(dim^2).
    """

    def __init__(self, spec: SpectralDecomposition, psi0: np.ndarray, weights: np.ndarray):
        self.spec = spec
        self._blocks = []
        for b in spec.blocks:
            a = b.eigenvectors.conj().T @ psi0[b.indices]
            if not np.any(np.abs(a) > 0):
                continue
            v = b.eigenvectors
            obs = v.conj().T @ (weights[b.indices][:, None] * v)
            m = np.conj(a)[:, None] * a[None, :] * obs
            self._blocks.append((b.eigenvalues, a, obs, m))

    def diagonal_ensemble(self) -> tuple[float, bool]:
        """sum_n |<n|psi0>|^2 O_nn and whether a degeneracy makes it approximate."""
        total = 0.0
        degenerate = False
        for w, a, obs, _ in self._blocks:
            total += float(np.real(np.abs(a) ** 2 @ np.real(np.diag(obs))))
            occupied = w[np.abs(a) > 0]
            if occupied.size > 1 and np.min(np.diff(np.sort(occupied))) < DEGENERACY_GAP:
                degenerate = True
        return total, degenerate

    def running_average(self, t: float) -> float:
        """(1/t) int_0^t eps(s) ds evaluated in closed form."""
        if t <= 0:
            raise ValueError("running average needs t > 0")
        total = 0.0
        for w, _, _, m in self._blocks:
            p = phase_factors(w, t)
            osc = np.conj(p)[:, None] * p[None, :]  # exp(i (E_m - E_n) t)
            x = (w[:, None] - w[None, :]) * t
            small = np.abs(x) < 1e-8
            with np.errstate(divide="ignore", invalid="ignore"):
                f = np.where(small, 1.0 + 0.5j * x, (osc - 1.0) / (1j * np.where(small, 1.0, x)))
            total += float(np.real(np.sum(m * f)))
        return total


def quench_spectrum(params: ModelParams, sequence: ProtectionSequence | None) -> SpectralDecomposition:
    return eigh(assemble(params, sequence))


def run_trajectory(
    params: ModelParams,
    sequence: ProtectionSequence | None,
    psi0: np.ndarray,
    times=None,
    average: str = "trapezoid",
    spectrum: SpectralDecomposition | None = None,
    table: GaugeSectorTable | None = None,
) -> Trajectory:
    """Quench psi0 with H = H0 + lam H1 + V H_G and record eps(t) and its running average.

    ``average`` selects the running-average scheme: ``trapezoid`` on the
    sampled grid or ``exact`` (closed-form time integral in the eigenbasis).
    """
    basis = params.basis
    psi0 = check_state(psi0, basis.dim)
    times = _check_times(default_time_grid() if times is None else times)
    if average not in ("trapezoid", "exact"):
        raise ValueError(f"unknown averaging scheme {average!r}")
    table = table or sector_map(basis)
    weights = table.violation_weights()
    spec = spectrum or quench_spectrum(params, sequence)

    states = evolve_many(spec, psi0, times)
    probs = np.abs(states) ** 2
    eps = probs @ weights
    norms = np.sqrt(probs.sum(axis=1))
    if average == "trapezoid":
        eps_avg = running_average_trapezoid(times, eps, gauge_violation(psi0, weights))
    else:
        dyn = ObservableDynamics(spec, psi0, weights)
        eps_avg = np.array([dyn.running_average(t) for t in times])
    return Trajectory(times, eps, eps_avg, params, sequence, norms)


def infinite_time_violation(
    params: ModelParams,
    sequence: ProtectionSequence | None,
    psi0: np.ndarray,
    mode: str = "sample_at_1e10",
    spectrum: SpectralDecomposition | None = None,
    table: GaugeSectorTable | None = None,
    times=None,
) -> float:
    """Long-time gauge violation.

    ``sample_at_1e10`` returns the exact time average of eps over [0, 1e10/J]
    (or up to the last entry of ``times``); ``diagonal_ensemble`` returns sum_n |<n|psi0>|^2 eps_n and
    warns with :class:`ApproximateResultWarning` if the spectrum is degenerate.
    """
    basis = params.basis
    psi0 = check_state(psi0, basis.dim)
    table = table or sector_map(basis)
    spec = spectrum or quench_spectrum(params, sequence)
    if mode == "diagonal_ensemble":
        value, degenerate = ObservableDynamics(spec, psi0, table.violation_weights()).diagonal_ensemble()
        if degenerate:
            warnings.warn(
                "degenerate spectrum: diagonal ensemble is approximate", ApproximateResultWarning, stacklevel=2
            )
        return value
    if mode != "sample_at_1e10":
        raise ValueError(f"unknown mode {mode!r}")
    t_end = T_INFINITE if times is None else float(_check_times(times)[-1])
    return ObservableDynamics(spec, psi0, table.violation_weights()).running_average(t_end)


# ---------------------------------------------------------------- Zeno limit

def protection_levels(params: ModelParams, sequence: ProtectionSequence | None, table: GaugeSectorTable) -> np.ndarray:
    """Label of the protection-term eigenspace of every basis state."""
    if params.protection_kind == "linear":
        return np.asarray(sector_energies(sequence, table))[table.sector_index]
    if params.protection_kind == "quadratic":
        return np.sum(table.basis_to_sector ** 2, axis=1)
    return np.zeros(table.dim, dtype=np.int64)


def zeno_hamiltonian(
    params: ModelParams, sequence: ProtectionSequence | None, table: GaugeSectorTable | None = None
) -> Operator:
    """V H_G + sum_n Pi_n (H0 + lam H1) Pi_n."""
    basis = params.basis
    table = table or sector_map(basis)
    levels = protection_levels(params, sequence, table)
    bare = build_h0(params)
    if params.error_kind != "none" and params.lam != 0:
        bare = bare + params.lam * build_h1(params.error_kind, basis)
    if bare.is_sparse:
        coo = sp.coo_array(bare.data)
        keep = levels[coo.row] == levels[coo.col]
        masked = Operator(
            sp.csr_array((coo.data[keep], (coo.row[keep], coo.col[keep])), shape=coo.shape), hermitian=True
        )
    else:
        dense = bare.toarray()
        masked = Operator(np.where(levels[:, None] == levels[None, :], dense, 0.0), hermitian=True)
    if params.protection_kind == "none" or params.V == 0:
        return masked
    from .model import build_protection

    return masked + params.V * build_protection(params.protection_kind, basis, sequence)


def zeno_evolution(
    params: ModelParams,
    sequence: ProtectionSequence | None,
    psi0: np.ndarray,
    t: float,
    table: GaugeSectorTable | None = None,
) -> np.ndarray:
    psi0 = check_state(psi0, params.basis.dim)
    return evolve_with_spectrum(eigh(zeno_hamiltonian(params, sequence, table)), psi0, t)


def zeno_residual(
    params: ModelParams,
    sequence: ProtectionSequence | None,
    psi0: np.ndarray,
    t: float,
    V_list: Sequence[float],
    table: GaugeSectorTable | None = None,
) -> np.ndarray:
    """||U(t) psi0 - U_zeno(t) psi0|| for every V in ``V_list``."""
    V_list = np.asarray(V_list, dtype=float)
    if np.any(V_list <= 0) or np.any(np.diff(V_list) <= 0):
        raise ValueError("V_list must be positive and ascending")
    psi0 = check_state(psi0, params.basis.dim)
    table = table or sector_map(params.basis)
    out = []
    for V in V_list:
        p = params.with_(V=float(V))
        full = evolve_with_spectrum(quench_spectrum(p, sequence), psi0, t)
        zeno = zeno_evolution(p, sequence, psi0, t, table)
        out.append(np.linalg.norm(full - zeno))
    return np.array(out)
