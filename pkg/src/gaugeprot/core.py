"""Operator algebra on a 2L-qubit chain and the Hermitian spectral machinery.

Qubit ordering: qubit 0 is the most significant bit of a basis index.
``|0>`` is spin up (sigma^z = +1), ``|1>`` is spin down (sigma^z = -1).
Matter site j (1-based) lives on qubit 2(j-1); the link (j, j+1) lives on
qubit 2(j-1)+1, with the link (L, 1) closing the ring.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

HERMITIAN_ATOL = 1e-12
STATE_NORM_ATOL = 1e-10

# 2*pi in extended precision for phase reduction at huge times.
_TWO_PI_LD = np.longdouble(8) * np.arctan(np.longdouble(1))


class ContractViolation(ValueError):
    """An operation received an operator that breaks its stated contract."""


@dataclass(frozen=True)
class SpinBasis:
    L: int

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"need at least one matter site, got L={self.L}")

    @property
    def n_qubits(self) -> int:
        return 2 * self.L

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    def matter_qubit(self, j: int) -> int:
        """Qubit index of matter site j (1-based, taken modulo L)."""
        return 2 * ((j - 1) % self.L)

    def link_qubit(self, j: int) -> int:
        """Qubit index of the link (j, j+1); j=0 means the link (L, 1)."""
        return 2 * ((j - 1) % self.L) + 1

    def bits(self, qubit: int) -> np.ndarray:
        """0/1 value of ``qubit`` for every basis index."""
        self._check_qubit(qubit)
        idx = np.arange(self.dim, dtype=np.int64)
        return (idx >> (self.n_qubits - 1 - qubit)) & 1

    def z_values(self, qubit: int) -> np.ndarray:
        """sigma^z eigenvalue (+1/-1, int) of ``qubit`` for every basis index."""
        return 1 - 2 * self.bits(qubit)

    def index_of(self, bitstring: str | Sequence[int]) -> int:
        bits = [int(b) for b in bitstring]
        if len(bits) != self.n_qubits or any(b not in (0, 1) for b in bits):
            raise ValueError(f"expected {self.n_qubits} bits, got {bitstring!r}")
        out = 0
        for b in bits:
            out = (out << 1) | b
        return out

    def bitstring(self, index: int) -> str:
        return format(index, f"0{self.n_qubits}b")

    def _check_qubit(self, qubit: int):
        if not 0 <= qubit < self.n_qubits:
            raise IndexError(f"qubit {qubit} out of range for {self.n_qubits} qubits")


@dataclass(frozen=True, eq=False)
class Operator:
    """Matrix on the chain Hilbert space.

    ``data`` is a 1-D array of diagonal entries when ``diagonal`` is set,
    otherwise a dense 2-D array or a scipy sparse matrix.
    """

    data: object
    hermitian: bool = False
    diagonal: bool = False

    def __post_init__(self):
        if self.diagonal:
            if not (isinstance(self.data, np.ndarray) and self.data.ndim == 1):
                raise ValueError("diagonal operators store a 1-D array")
        elif sp.issparse(self.data):
            object.__setattr__(self, "data", sp.csr_array(self.data))
        else:
            arr = np.asarray(self.data)
            if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
                raise ValueError(f"expected a square matrix, got shape {arr.shape}")
            object.__setattr__(self, "data", arr)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.data)

    @property
    def is_real(self) -> bool:
        d = self.data.data if self.is_sparse else self.data
        return not np.iscomplexobj(d) or not np.any(np.imag(d))

    def toarray(self) -> np.ndarray:
        if self.diagonal:
            return np.diag(self.data)
        if self.is_sparse:
            return self.data.toarray()
        return self.data

    def tocsr(self) -> sp.csr_array:
        if self.diagonal:
            return sp.csr_array(sp.diags_array(self.data))
        if self.is_sparse:
            return self.data
        return sp.csr_array(self.data)

    def diag(self) -> np.ndarray:
        if self.diagonal:
            return self.data
        return np.asarray(self.data.diagonal())

    def dagger(self) -> "Operator":
        d = np.conj(self.data) if self.diagonal else self.data.conj().T
        return Operator(d, self.hermitian, self.diagonal)

    def max_abs(self) -> float:
        if self.diagonal or not self.is_sparse:
            return float(np.max(np.abs(self.data), initial=0.0))
        return float(np.max(np.abs(self.data.data), initial=0.0))

    def apply(self, psi: np.ndarray) -> np.ndarray:
        if self.diagonal:
            return self.data * psi
        return self.data @ psi

    def _check_dim(self, other: "Operator"):
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: "Operator") -> "Operator":
        if not isinstance(other, Operator):
            return NotImplemented
        self._check_dim(other)
        herm = self.hermitian and other.hermitian
        if self.diagonal and other.diagonal:
            return Operator(self.data + other.data, herm, True)
        if self.diagonal or other.diagonal:
            a, b = (self, other) if self.diagonal else (other, self)
            if b.is_sparse:
                return Operator(a.tocsr() + b.data, herm)
            out = b.data.astype(np.result_type(a.data, b.data), copy=True)
            out[np.diag_indices(out.shape[0])] += a.data
            return Operator(out, herm)
        if self.is_sparse and other.is_sparse:
            return Operator(self.data + other.data, herm)
        return Operator(_dense(self.data) + _dense(other.data), herm)

    def __neg__(self) -> "Operator":
        return Operator(-self.data, self.hermitian, self.diagonal)

    def __sub__(self, other: "Operator") -> "Operator":
        return self + (-other)

    def __mul__(self, scalar) -> "Operator":
        if isinstance(scalar, Operator):
            return NotImplemented
        herm = self.hermitian and np.isreal(scalar)
        if np.isreal(scalar):
            scalar = float(np.real(scalar))
        return Operator(self.data * scalar, bool(herm), self.diagonal)

    __rmul__ = __mul__

    def __matmul__(self, other: "Operator") -> "Operator":
        if not isinstance(other, Operator):
            return NotImplemented
        self._check_dim(other)
        if self.diagonal and other.diagonal:
            prod = self.data * other.data
            return Operator(prod, bool(self.hermitian and other.hermitian and not np.iscomplexobj(prod)), True)
        if self.diagonal:
            lhs = sp.diags_array(self.data) if other.is_sparse else self.data[:, None]
            data = lhs @ other.data if other.is_sparse else lhs * other.data
            return Operator(data)
        if other.diagonal:
            if self.is_sparse:
                return Operator(self.data @ sp.diags_array(other.data))
            return Operator(self.data * other.data[None, :])
        if self.is_sparse and other.is_sparse:
            return Operator(self.data @ other.data)
        return Operator(_dense(self.data) @ _dense(other.data))


def _dense(data) -> np.ndarray:
    return data.toarray() if sp.issparse(data) else data


def commutator(a: Operator, b: Operator) -> Operator:
    return (a @ b) - (b @ a)


def identity(basis: SpinBasis) -> Operator:
    return Operator(np.ones(basis.dim), hermitian=True, diagonal=True)


_SINGLE = {
    "x": np.array([[0, 1], [1, 0]], dtype=float),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=float),
    "+": np.array([[0, 1], [0, 0]], dtype=float),  # |up><down|
    "-": np.array([[0, 0], [1, 0]], dtype=float),
}


def local_matrix(axis: str) -> np.ndarray:
    try:
        return _SINGLE[axis]
    except KeyError:
        raise ValueError(f"unknown Pauli axis {axis!r}; expected one of x,y,z,+,-") from None


def embed_pauli(axis: str, qubit: int, basis: SpinBasis) -> Operator:
    """Single-qubit Pauli or ladder operator on ``qubit``, identity elsewhere."""
    single = local_matrix(axis)
    basis._check_qubit(qubit)
    if axis == "z":
        return Operator(basis.z_values(qubit).astype(float), hermitian=True, diagonal=True)
    n = basis.n_qubits
    left = sp.identity(1 << qubit, format="csr")
    right = sp.identity(1 << (n - qubit - 1), format="csr")
    mat = sp.kron(sp.kron(left, sp.csr_array(single)), right, format="csr")
    return Operator(mat, hermitian=axis in ("x", "y"))


def pauli_string(factors: dict[int, str], basis: SpinBasis) -> sp.csr_array:
    """Sparse tensor product of single-qubit factors ``{qubit: axis}``."""
    for q in factors:
        basis._check_qubit(q)
    mat = sp.csr_array(np.ones((1, 1)))
    for q in range(basis.n_qubits):
        axis = factors.get(q)
        single = sp.identity(2, format="csr") if axis is None else sp.csr_array(local_matrix(axis))
        mat = sp.kron(mat, single, format="csr")
    return mat


def check_hermitian(op: Operator, atol: float = HERMITIAN_ATOL) -> float:
    """Max-entry deviation from Hermiticity."""
    if op.diagonal:
        return float(np.max(np.abs(np.imag(op.data)), initial=0.0))
    diff = op.data - op.data.conj().T
    if sp.issparse(diff):
        return float(np.max(np.abs(diff.data), initial=0.0))
    return float(np.max(np.abs(diff), initial=0.0))


def check_state(psi: np.ndarray, dim: int | None = None, atol: float = STATE_NORM_ATOL) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise ValueError("state must be a 1-D amplitude vector")
    if dim is not None and psi.shape[0] != dim:
        raise ValueError(f"state dimension {psi.shape[0]} does not match {dim}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > atol:
        raise ValueError(f"state is not normalized (norm={norm!r})")
    return psi


def basis_state(index: int, basis: SpinBasis) -> np.ndarray:
    psi = np.zeros(basis.dim, dtype=complex)
    psi[index] = 1.0
    return psi


@dataclass(frozen=True, eq=False)
class SpectralBlock:
    indices: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigen-decomposition stored per decoupled block of the source operator.

    Basis states that the operator never connects are diagonalized
    separately; the dense ``eigenvectors`` view is assembled on demand.
    """

    blocks: tuple[SpectralBlock, ...]
    dim: int
    source: Operator | None = field(default=None, repr=False)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.sort(np.concatenate([b.eigenvalues for b in self.blocks]))

    @property
    def eigenvectors(self) -> np.ndarray:
        vals = np.concatenate([b.eigenvalues for b in self.blocks])
        dtype = np.result_type(*[b.eigenvectors for b in self.blocks])
        vecs = np.zeros((self.dim, self.dim), dtype=dtype)
        col = 0
        for b in self.blocks:
            k = len(b.eigenvalues)
            vecs[b.indices, col:col + k] = b.eigenvectors
            col += k
        order = np.argsort(vals, kind="stable")
        return vecs[:, order]

    def coefficients(self, psi: np.ndarray) -> list[np.ndarray]:
        """Overlaps <n|psi> block by block."""
        return [b.eigenvectors.conj().T @ psi[b.indices] for b in self.blocks]


def _components(dense: np.ndarray) -> list[np.ndarray]:
    pattern = sp.csr_array(dense != 0)
    n, labels = connected_components(pattern, directed=False)
    order = np.argsort(labels, kind="stable")
    splits = np.cumsum(np.bincount(labels, minlength=n))[:-1]
    return np.split(order, splits)


def eigh(op: Operator, split_blocks: bool = True) -> SpectralDecomposition:
    """Full Hermitian diagonalization, block by block when the matrix decouples."""
    if not op.hermitian:
        raise ContractViolation("eigh requires an operator flagged Hermitian")
    if op.diagonal:
        vals = np.real(op.data).astype(float)
        blocks = tuple(
            SpectralBlock(np.array([i]), vals[i:i + 1], np.ones((1, 1))) for i in range(op.dim)
        )
        return SpectralDecomposition(blocks, op.dim, op)
    dense = op.toarray()
    if check_hermitian(op) > HERMITIAN_ATOL * max(1.0, op.max_abs()):
        raise ContractViolation("operator flagged Hermitian is not Hermitian")
    if not np.any(np.imag(dense)):
        dense = np.real(dense)
    groups = _components(dense) if split_blocks else [np.arange(op.dim)]
    blocks = []
    for idx in groups:
        sub = dense[np.ix_(idx, idx)]
        w, v = np.linalg.eigh(sub)
        blocks.append(SpectralBlock(idx, w, v))
    return SpectralDecomposition(tuple(blocks), op.dim, op)


def phase_factors(eigenvalues: np.ndarray, t: float) -> np.ndarray:
    """exp(-i E t) with E*t reduced modulo 2*pi in extended precision."""
    if not np.isfinite(t):
        raise ValueError(f"time must be finite, got {t!r}")
    angle = np.mod(np.asarray(eigenvalues, dtype=np.longdouble) * np.longdouble(t), _TWO_PI_LD)
    return np.exp(-1j * angle.astype(float))


def evolve_with_spectrum(spec: SpectralDecomposition, psi: np.ndarray, t: float) -> np.ndarray:
    """V exp(-i E t) V^dagger psi using precomputed eigenpairs."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (spec.dim,):
        raise ValueError(f"state dimension {psi.shape} does not match spectrum dimension {spec.dim}")
    out = np.empty(spec.dim, dtype=complex)
    for b in spec.blocks:
        a = b.eigenvectors.conj().T @ psi[b.indices]
        out[b.indices] = b.eigenvectors @ (phase_factors(b.eigenvalues, t) * a)
    return out


def evolve_many(spec: SpectralDecomposition, psi: np.ndarray, times: Sequence[float]) -> np.ndarray:
    """States at all ``times`` as rows of a (len(times), dim) array."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (spec.dim,):
        raise ValueError(f"state dimension {psi.shape} does not match spectrum dimension {spec.dim}")
    times = np.asarray(times, dtype=float)
    out = np.empty((len(times), spec.dim), dtype=complex)
    for b in spec.blocks:
        a = b.eigenvectors.conj().T @ psi[b.indices]
        if not np.any(a):
            out[:, b.indices] = 0.0
            continue
        phases = np.stack([phase_factors(b.eigenvalues, t) for t in times], axis=1)
        out[:, b.indices] = (b.eigenvectors @ (phases * a[:, None])).T
    return out
