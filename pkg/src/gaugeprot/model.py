"""Hamiltonians of the U(1) quantum link model with errors and energy penalties."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np
import scipy.sparse as sp

from .core import Operator, SpinBasis, pauli_string

if TYPE_CHECKING:
    from .gauge import ProtectionSequence

ERROR_KINDS = ("local", "extreme", "none")
PROTECTION_KINDS = ("linear", "quadratic", "none")


@dataclass(frozen=True)
class ModelParams:
    """Couplings in units of J (J itself is fixed to 1)."""

    L: int
    mu: float = 0.5
    lam: float = 0.05
    V: float = 0.0
    error_kind: str = "extreme"
    protection_kind: str = "linear"
    J: float = 1.0

    def __post_init__(self):
        if self.J != 1.0:
            raise ValueError("J is the energy unit and must equal 1")
        if self.L < 2 or self.L % 2:
            raise ValueError(f"L must be even and >= 2, got {self.L}")
        if self.error_kind not in ERROR_KINDS:
            raise ValueError(f"error_kind must be one of {ERROR_KINDS}, got {self.error_kind!r}")
        if self.protection_kind not in PROTECTION_KINDS:
            raise ValueError(
                f"protection_kind must be one of {PROTECTION_KINDS}, got {self.protection_kind!r}"
            )

    @property
    def basis(self) -> SpinBasis:
        return SpinBasis(self.L)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


def _sum_sparse(terms, dim) -> sp.csr_array:
    out = sp.csr_array((dim, dim), dtype=float)
    for t in terms:
        out = out + t
    return out


def build_hj(basis: SpinBasis, J: float = 1.0) -> Operator:
    """Gauge-matter coupling J * sum_j (s^-_j t^+_{j,j+1} s^-_{j+1} + h.c.)."""
    terms = []
    for j in range(1, basis.L + 1):
        hop = pauli_string(
            {basis.matter_qubit(j): "-", basis.link_qubit(j): "+", basis.matter_qubit(j + 1): "-"},
            basis,
        )
        terms.append(hop + hop.T)
    return Operator(J * _sum_sparse(terms, basis.dim), hermitian=True)


def build_mass(basis: SpinBasis, mu: float) -> Operator:
    z = sum(basis.z_values(basis.matter_qubit(j)) for j in range(1, basis.L + 1))
    return Operator(0.5 * mu * np.asarray(z, dtype=float), hermitian=True, diagonal=True)


def build_h0(params: ModelParams) -> Operator:
    basis = params.basis
    return build_hj(basis, params.J) + build_mass(basis, params.mu)


def gauss_values(basis: SpinBasis) -> np.ndarray:
    """Integer eigenvalues g_j of every G_j on every basis state, shape (L, dim)."""
    out = np.empty((basis.L, basis.dim), dtype=np.int64)
    for j in range(1, basis.L + 1):
        s = (
            basis.z_values(basis.matter_qubit(j))
            + basis.z_values(basis.link_qubit(j - 1))
            + basis.z_values(basis.link_qubit(j))
            + 1
        )
        out[j - 1] = (-1) ** j * (s // 2)
    return out


def build_gauss(j: int, basis: SpinBasis) -> Operator:
    if not 1 <= j <= basis.L:
        raise IndexError(f"matter site {j} outside 1..{basis.L}")
    return Operator(gauss_values(basis)[j - 1].astype(float), hermitian=True, diagonal=True)


def local_error_terms(basis: SpinBasis) -> list[sp.csr_array]:
    """Per-site summands t^x_{j,j+1} + s^+_j s^+_{j+1} + s^-_j s^-_{j+1}."""
    terms = []
    for j in range(1, basis.L + 1):
        flip = pauli_string({basis.link_qubit(j): "x"}, basis)
        pair = pauli_string({basis.matter_qubit(j): "+", basis.matter_qubit(j + 1): "+"}, basis)
        terms.append(flip + pair + pair.T)
    return terms


def x_product_term(basis: SpinBasis) -> np.ndarray:
    """sum_{xi=+-1} prod_q (1 + xi X_q) over all 2L qubits.

    Equals 2^{2L} (|+><+| + |-><-|): entry 2 where the two basis states have
    equal bit parity, 0 otherwise.
    """
    parity = np.bitwise_count(np.arange(basis.dim, dtype=np.uint64)) & 1
    return 2.0 * (parity[:, None] == parity[None, :])


def build_h1(kind: str, basis: SpinBasis) -> Operator:
    """Gauge-breaking error term, ``local`` or ``extreme`` (local part plus all-qubit product)."""
    if kind not in ("local", "extreme"):
        raise ValueError(f"unknown error kind {kind!r}")
    local = _sum_sparse(local_error_terms(basis), basis.dim)
    if kind == "local":
        return Operator(local, hermitian=True)
    dense = x_product_term(basis)
    dense += local.toarray()
    return Operator(dense, hermitian=True)


def build_protection(kind: str, basis: SpinBasis, sequence: "ProtectionSequence | None" = None) -> Operator:
    """sum_j c_j G_j (linear) or sum_j G_j^2 (quadratic), without the V prefactor."""
    g = gauss_values(basis)
    if kind == "quadratic":
        return Operator(np.sum(g.astype(float) ** 2, axis=0), hermitian=True, diagonal=True)
    if kind != "linear":
        raise ValueError(f"unknown protection kind {kind!r}")
    if sequence is None:
        raise ValueError("linear protection needs a coefficient sequence")
    c = np.asarray(sequence.coefficients, dtype=float)
    if c.shape != (basis.L,):
        raise ValueError(f"sequence has {c.size} coefficients but L={basis.L}")
    return Operator(c @ g.astype(float), hermitian=True, diagonal=True)


def assemble(params: ModelParams, sequence: "ProtectionSequence | None" = None) -> Operator:
    """Full Hamiltonian H0 + lam*H1 + V*(protection)."""
    basis = params.basis
    h = build_h0(params)
    if params.error_kind != "none" and params.lam != 0:
        h = h + params.lam * build_h1(params.error_kind, basis)
    if params.protection_kind != "none" and params.V != 0:
        h = h + params.V * build_protection(params.protection_kind, basis, sequence)
    return h


# ---------------------------------------------------------------- initial states

def gauge_invariant_links(basis: SpinBasis, matter_z, first_link_z: int) -> list[int] | None:
    """Solve G_j = 0 for the links given matter spins and the z value of link (L, 1).

    Returns the link z-values for links (1,2) ... (L,1), or None if the
    choice cannot be completed consistently.
    """
    links = []
    prev = first_link_z
    for j in range(1, basis.L + 1):
        nxt = -1 - matter_z[j - 1] - prev
        if nxt not in (-1, 1):
            return None
        links.append(nxt)
        prev = nxt
    if links[-1] != first_link_z:
        return None
    return links


def product_state_index(basis: SpinBasis, matter_z, link_z) -> int:
    bits = []
    for j in range(basis.L):
        bits.append(0 if matter_z[j] > 0 else 1)
        bits.append(0 if link_z[j] > 0 else 1)
    return basis.index_of(bits)


def staggered_vacuum_index(basis: SpinBasis, odd_links: str = "down") -> int:
    """Empty matter sites; links (j, j+1) down for odd j and up for even j (or mirrored)."""
    if odd_links not in ("down", "up"):
        raise ValueError("odd_links must be 'down' or 'up'")
    odd = -1 if odd_links == "down" else 1
    links = [odd if j % 2 else -odd for j in range(1, basis.L + 1)]
    return product_state_index(basis, [-1] * basis.L, links)


def particle_state_index(basis: SpinBasis, sites) -> int:
    """Product state in g=0 with particles on the given matter sites (1-based)."""
    matter = [1 if j in set(sites) else -1 for j in range(1, basis.L + 1)]
    for first in (1, -1):
        links = gauge_invariant_links(basis, matter, first)
        if links is not None:
            return product_state_index(basis, matter, links)
    raise ValueError(f"no gauge-invariant link configuration for particles on {sorted(sites)}")


def staggered_vacuum(basis: SpinBasis, odd_links: str = "down") -> np.ndarray:
    psi = np.zeros(basis.dim, dtype=complex)
    psi[staggered_vacuum_index(basis, odd_links)] = 1.0
    return psi


def two_particle_state(basis: SpinBasis, sites=(1, 4)) -> np.ndarray:
    psi = np.zeros(basis.dim, dtype=complex)
    psi[particle_state_index(basis, sites)] = 1.0
    return psi
