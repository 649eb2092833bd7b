"""kappa-norms of interaction potentials and the minimal protection strength estimate.

The lattice is the set of L cells; cell j holds matter site j and the link
(j, j+1). A term's support is the set of cells its qubits fall into.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

from .core import SpinBasis, pauli_string
from .gauge import GaugeSectorTable, ProtectionSequence, sector_energies, sector_map
from .model import ModelParams, local_error_terms

N_STAR_THRESHOLD = 3.0  # floor(r) - 2 >= 1  <=>  r >= 3
PRODUCT_NORMS = ("projector", "literal")


@dataclass(frozen=True, eq=False)
class PotentialTerm:
    support: frozenset[int]  # cells
    qubits: tuple[int, ...]
    part: str  # diag or ndiag
    op_norm: float
    label: str = ""
    _block: Callable[[], np.ndarray] | None = field(default=None, repr=False)

    def block(self) -> np.ndarray:
        """Matrix of the term on its own qubits (ordered as ``qubits``)."""
        if self._block is None:
            raise ValueError(f"term {self.label!r} has no stored block")
        return self._block()


@dataclass(frozen=True, eq=False)
class PotentialDecomposition:
    n_sites: int
    terms: tuple[PotentialTerm, ...]

    def part(self, name: str) -> "PotentialDecomposition":
        return PotentialDecomposition(self.n_sites, tuple(t for t in self.terms if t.part == name))

    def scaled(self, s: float) -> "PotentialDecomposition":
        return PotentialDecomposition(
            self.n_sites,
            tuple(PotentialTerm(t.support, t.qubits, t.part, s * t.op_norm, t.label, None) for t in self.terms),
        )


def cell_of_qubit(q: int) -> int:
    return q // 2 + 1


def is_connected(cells: frozenset[int], L: int) -> bool:
    """Connectivity of a set of cells on the ring."""
    if not cells:
        return False
    if len(cells) == L:
        return True
    missing = [c for c in range(1, L + 1) if c not in cells]
    # on a ring the complement of a connected arc is a single arc
    gaps = sum(1 for c in missing if (c % L) + 1 not in missing)
    return gaps == 1


def enlarged_support(qubits: Sequence[int], L: int) -> frozenset[int]:
    """Cells of every Gauss generator touching ``qubits``; G_j covers cells j-1 and j."""
    basis = SpinBasis(L)
    out = set()
    for j in range(1, L + 1):
        gq = {basis.matter_qubit(j), basis.link_qubit(j - 1), basis.link_qubit(j)}
        if gq & set(qubits):
            out |= {(j - 2) % L + 1, j}
    return frozenset(out)


def local_block(op: sp.sparray, qubits: Sequence[int], basis: SpinBasis) -> np.ndarray:
    """Restriction of op = X_Q (x) 1 to its qubits Q: rows/cols with every other qubit up."""
    qubits = list(qubits)
    n = basis.n_qubits
    k = len(qubits)
    idx = np.zeros(1 << k, dtype=np.int64)
    for local in range(1 << k):
        for pos, q in enumerate(qubits):
            if (local >> (k - 1 - pos)) & 1:
                idx[local] |= 1 << (n - 1 - q)
    return sp.csr_array(op)[idx][:, idx].toarray()


def embed_block(block: np.ndarray, qubits: Sequence[int], basis: SpinBasis) -> sp.csr_array:
    """Inverse of :func:`local_block`: X_Q (x) identity on the other qubits."""
    qubits = list(qubits)
    n = basis.n_qubits
    k = len(qubits)
    others = [q for q in range(n) if q not in qubits]
    qmask = [1 << (n - 1 - q) for q in qubits]
    omask = [1 << (n - 1 - q) for q in others]
    local_to_bits = np.array(
        [sum(m for pos, m in enumerate(qmask) if (loc >> (k - 1 - pos)) & 1) for loc in range(1 << k)], dtype=np.int64
    )
    rest_to_bits = np.array(
        [sum(m for pos, m in enumerate(omask) if (r >> (len(others) - 1 - pos)) & 1) for r in range(1 << len(others))],
        dtype=np.int64,
    )
    bl = sp.coo_array(block)
    rows = (rest_to_bits[:, None] + local_to_bits[bl.row][None, :]).ravel()
    cols = (rest_to_bits[:, None] + local_to_bits[bl.col][None, :]).ravel()
    data = np.tile(bl.data, len(rest_to_bits))
    return sp.csr_array((data, (rows, cols)), shape=(basis.dim, basis.dim))


def _levels(table: GaugeSectorTable, sequence: ProtectionSequence | None) -> np.ndarray:
    """Eigenvalue label of H_G on every basis state (sector index if no sequence is given)."""
    if sequence is None:
        return table.sector_index
    return np.asarray(sector_energies(sequence, table))[table.sector_index]


def _split(op: sp.csr_array, levels: np.ndarray) -> tuple[sp.csr_array, sp.csr_array]:
    coo = sp.coo_array(op)
    same = levels[coo.row] == levels[coo.col]
    shape = coo.shape
    diag = sp.csr_array((coo.data[same], (coo.row[same], coo.col[same])), shape=shape)
    ndiag = sp.csr_array((coo.data[~same], (coo.row[~same], coo.col[~same])), shape=shape)
    return diag, ndiag


def _add_split_terms(terms, op, qubits, label, basis, levels, diag_support):
    L = basis.L
    support = frozenset(cell_of_qubit(q) for q in qubits)
    if not is_connected(support, L):
        raise ValueError(f"term {label} has disconnected support {sorted(support)}")
    diag, ndiag = _split(op, levels)
    for part, piece in (("diag", diag), ("ndiag", ndiag)):
        if piece.nnz == 0 or np.max(np.abs(piece.data)) == 0:
            continue
        blk = local_block(piece, qubits, basis)
        norm = float(np.linalg.norm(blk, 2))
        supp = support
        if part == "diag" and diag_support == "S+":
            supp = support | enlarged_support(qubits, L)
        terms.append(PotentialTerm(supp, tuple(qubits), part, norm, f"{label}:{part}", lambda b=blk: b))


def _product_terms(terms, basis, levels, lam, product_norm):
    """Diag/ndiag parts of lam * w |xi><xi| for xi = +-, with w = 1 or 2^{2L}.

    |xi> has equal weight 1/dim on every basis state, so Pi_n|xi> has squared
    norm p_n = (states at level n)/dim. The diag part is block diagonal with
    rank-one blocks (norm max p_n); the ndiag part is w w^T - diag(p) in the
    orthonormal basis Pi_n|xi>/sqrt(p_n) with w_n = sqrt(p_n).
    """
    weight = lam * (1.0 if product_norm == "projector" else float(basis.dim))
    _, counts = np.unique(levels, return_counts=True)
    p = counts / basis.dim
    w = np.sqrt(p)
    diag_norm = weight * float(p.max())
    ndiag_norm = weight * float(np.max(np.abs(np.linalg.eigvalsh(np.outer(w, w) - np.diag(p)))))
    support = frozenset(range(1, basis.L + 1))
    qubits = tuple(range(basis.n_qubits))
    parity = np.bitwise_count(np.arange(basis.dim, dtype=np.uint64)) & 1

    for xi in (1, -1):
        def full(xi=xi):
            s = np.where(parity == 1, xi, 1).astype(float)
            return weight / basis.dim * np.outer(s, s)

        def diag_block(full=full):
            return np.where(levels[:, None] == levels[None, :], full(), 0.0)

        def ndiag_block(full=full):
            return np.where(levels[:, None] != levels[None, :], full(), 0.0)

        tag = "+" if xi > 0 else "-"
        terms.append(PotentialTerm(support, qubits, "diag", diag_norm, f"product{tag}:diag", diag_block))
        if ndiag_norm > 0:
            terms.append(PotentialTerm(support, qubits, "ndiag", ndiag_norm, f"product{tag}:ndiag", ndiag_block))


def decompose(
    params: ModelParams,
    sequence: ProtectionSequence | None = None,
    product_norm: str = "projector",
    diag_support: str = "S",
    table: GaugeSectorTable | None = None,
) -> PotentialDecomposition:
    """Term-by-term split of H0 + lam H1 into H_G-diagonal and off-diagonal parts.

    Each j-summand of H0 (hopping plus mass on site j) and of the local error
    is one term on cells {j, j+1}. The diagonal part of a term only depends on
    the qubits it flips, so it keeps the support S; ``diag_support="S+"``
    records the enlarged support of every Gauss generator touching S instead.

    The all-qubit product of the extreme error enters as two terms, one per
    xi. ``product_norm="literal"`` uses the operator as written (norm 2^{2L});
    ``"projector"`` weights each xi term as a unit-norm projector.
    """
    if product_norm not in PRODUCT_NORMS:
        raise ValueError(f"product_norm must be one of {PRODUCT_NORMS}")
    if diag_support not in ("S", "S+"):
        raise ValueError("diag_support must be 'S' or 'S+'")
    basis = params.basis
    L = basis.L
    table = table or sector_map(basis)
    levels = _levels(table, sequence)
    terms: list[PotentialTerm] = []

    for j in range(1, L + 1):
        m, l, m2 = basis.matter_qubit(j), basis.link_qubit(j), basis.matter_qubit(j + 1)
        hop = pauli_string({m: "-", l: "+", m2: "-"}, basis)
        op = params.J * (hop + hop.T) + 0.5 * params.mu * pauli_string({m: "z"}, basis)
        _add_split_terms(terms, sp.csr_array(op), sorted((m, l, m2)), f"H0[{j}]", basis, levels, diag_support)

    if params.error_kind != "none" and params.lam != 0:
        for j, t in enumerate(local_error_terms(basis), start=1):
            qs = sorted((basis.matter_qubit(j), basis.link_qubit(j), basis.matter_qubit(j + 1)))
            _add_split_terms(terms, params.lam * t, qs, f"H1[{j}]", basis, levels, diag_support)
        if params.error_kind == "extreme":
            _product_terms(terms, basis, levels, params.lam, product_norm)

    return PotentialDecomposition(L, tuple(terms))


def reconstruct(pot: PotentialDecomposition, basis: SpinBasis) -> np.ndarray:
    """Sum of all embedded terms (dense, for checks at small L)."""
    out = np.zeros((basis.dim, basis.dim))
    for t in pot.terms:
        blk = t.block()
        if len(t.qubits) == basis.n_qubits:
            out += blk
        else:
            out += embed_block(blk, t.qubits, basis).toarray()
    return out


def kappa_norm(pot: PotentialDecomposition, kappa: float) -> float:
    """sup_x sum_{S containing x} e^{kappa |S|} ||X_S||."""
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    if not pot.terms:
        return 0.0
    per_site = np.zeros(pot.n_sites + 1)
    for t in pot.terms:
        w = math.exp(kappa * len(t.support)) * t.op_norm
        for x in t.support:
            per_site[x] += w
    return float(per_site.max())


def n_star(V: float, V0: float) -> int:
    """floor((V/V0) / (1 + ln(V/V0))^3) - 2; -1 where the formula is undefined (V/V0 <= 1/e)."""
    x = V / V0
    d = 1.0 + math.log(x) if x > 0 else -1.0
    if d <= 0:
        return -1
    r = x / d**3
    if not math.isfinite(r):
        return 10**9
    return int(math.floor(r)) - 2


def _ratio(x: float) -> float:
    return x / (1.0 + math.log(x)) ** 3


@dataclass(frozen=True)
class NormEstimate:
    kappa0: float
    norm_diag: float
    norm_ndiag: float
    V0: float
    V_min: float
    V_eq7: float
    v_window_low: float
    v_window_high: float
    v_min_asymptotic: float
    kappa_n_star: float
    rule: str
    failed: bool = False

    def n_star(self, V: float) -> int:
        return n_star(V, self.V0)

    def eq7_holds(self, V: float) -> bool:
        return V >= self.V_eq7

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["n_star_at_V_min"] = None if self.failed else self.n_star(self.V_min)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def report(self) -> str:
        if self.failed:
            return "norm estimate failed: no kappa gave a finite V0"
        return "\n".join(
            [
                f"kappa0            {self.kappa0:.4g}",
                f"||H_diag||_k0     {self.norm_diag:.4g}",
                f"||H_ndiag||_k0    {self.norm_ndiag:.4g}",
                f"V0                {self.V0:.4g}",
                f"V_min ({self.rule})  {self.V_min:.4g}",
                f"  n*(V_min)       {self.n_star(self.V_min)}",
                f"  kappa_n*        {self.kappa_n_star:.4g}",
                f"V >= 9 pi ||H_ndiag|| / kappa0 : {self.V_eq7:.4g}",
                f"n* >= 1 window    ({self.v_window_low:.4g}, {self.v_window_high:.4g}] and [{self.v_min_asymptotic:.4g}, inf)",
            ]
        )


def _refined_min(f, lo: float, hi: float, n: int) -> tuple[float, float]:
    grid = np.geomspace(lo, hi, n)
    vals = np.array([f(k) for k in grid])
    if not np.any(np.isfinite(vals)):
        return math.nan, math.inf
    k = int(np.nanargmin(np.where(np.isfinite(vals), vals, np.inf)))
    return float(grid[k]), float(vals[k])


def default_kappa_grid(n: int = 64) -> np.ndarray:
    return np.geomspace(0.01, 5.0, n)


def estimate_vmin(
    pot: PotentialDecomposition, kappa_grid: Sequence[float] | None = None, rule: str = "window_edge"
) -> NormEstimate:
    """Minimize V0 over kappa, then locate the minimal protection strength.

    n* >= 1 holds on (V0/e, x_hi V0] and again on [x_a V0, inf). ``rule``
    picks V_min: ``window_edge`` returns x_hi V0 (about 0.68 V0),
    ``infimum`` the lower end just above V0/e, ``asymptotic`` x_a V0.
    All three are reported; V_min is also raised to the V >= 9 pi ||H_ndiag||/kappa0 bound.
    """
    if rule not in ("window_edge", "infimum", "asymptotic"):
        raise ValueError(f"unknown rule {rule!r}")
    grid = np.asarray(default_kappa_grid() if kappa_grid is None else kappa_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("kappa grid must be non-empty and positive")
    diag, ndiag = pot.part("diag"), pot.part("ndiag")

    def v0(k):
        with np.errstate(over="ignore"):
            try:
                return 54 * math.pi / k**2 * (kappa_norm(diag, k) + 2 * kappa_norm(ndiag, k))
            except OverflowError:
                return math.inf

    grid = np.sort(grid)
    vals = np.array([v0(k) for k in grid])
    ok = np.isfinite(vals) & (vals > 0)
    if not np.any(ok):
        nan = math.nan
        return NormEstimate(nan, nan, nan, nan, nan, nan, nan, nan, nan, nan, rule, failed=True)
    i = int(np.argmin(np.where(ok, vals, np.inf)))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    k0, V0 = (grid[i], vals[i]) if lo == hi else _refined_min(v0, lo, hi, grid.size)
    if vals[i] < V0:
        k0, V0 = grid[i], vals[i]

    nd, nn = kappa_norm(diag, k0), kappa_norm(ndiag, k0)
    V_eq7 = 9 * math.pi * nn / k0

    f = lambda x: _ratio(x) - N_STAR_THRESHOLD
    x_hi = brentq(f, math.exp(-1) * (1 + 1e-9), 1.0, xtol=1e-14)
    while _ratio(x_hi) < N_STAR_THRESHOLD:
        x_hi *= 1 - 1e-12
    x_a = brentq(f, math.e**2, 1e7, xtol=1e-9)
    while _ratio(x_a) < N_STAR_THRESHOLD:
        x_a *= 1 + 1e-12
    low, high, asym = V0 / math.e, x_hi * V0, x_a * V0

    if rule == "infimum":
        V_min = low * 1.01
    elif rule == "window_edge":
        V_min = high
    else:
        V_min = asym
    if V_min < V_eq7:
        # the low window is too small to meet the bound; fall back to the asymptotic branch
        V_min = max(asym, V_eq7) if V_eq7 > high else V_eq7
    ns = n_star(V_min, V0)
    kappa_ns = k0 / (1 + math.log(1 + ns)) if ns >= 0 else math.nan
    return NormEstimate(k0, nd, nn, V0, V_min, V_eq7, low, high, asym, kappa_ns, rule)
