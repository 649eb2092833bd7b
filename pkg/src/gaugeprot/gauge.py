"""Gauge-sector combinatorics: sector tables, compliant sequences, degeneracy checks.

All compliance arithmetic is exact integer arithmetic on sequence numerators.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .core import Operator, SpinBasis
from .model import gauss_values

MAX_ENUMERATION_L = 8
BLOCK_ATOL = 1e-12


class ResourceError(RuntimeError):
    """Requested enumeration is too large to run."""


@dataclass(frozen=True)
class ProtectionSequence:
    """Coefficients c_j = scale * numerators[j] / denominator.

    Normalized so that max |numerators| == denominator. ``scale`` carries
    physical units for sequences built from experimental parameters and
    is 1 for the dimensionless sequences used in the penalty V * sum_j c_j G_j.
    """

    numerators: tuple[int, ...]
    denominator: int
    scale: float = 1.0
    label: str = ""

    def __post_init__(self):
        nums = tuple(int(n) for n in self.numerators)
        object.__setattr__(self, "numerators", nums)
        if self.denominator <= 0:
            raise ValueError("denominator must be positive")
        if not nums or max(abs(n) for n in nums) != self.denominator:
            raise ValueError(
                f"sequence not normalized: max|numerators|={max((abs(n) for n in nums), default=0)}"
                f" but denominator={self.denominator}"
            )

    @classmethod
    def from_integers(cls, values, label: str = "") -> "ProtectionSequence":
        """Normalize an integer vector by its largest magnitude."""
        vals = [int(v) for v in values]
        return cls(tuple(vals), max(abs(v) for v in vals), 1.0, label)

    @classmethod
    def from_reals(cls, values, label: str = "", max_denominator: int = 10**9) -> "ProtectionSequence":
        """Exact-rational normalization of real coefficients, keeping their scale."""
        fracs = [Fraction(v).limit_denominator(max_denominator) for v in values]
        top = max(abs(f) for f in fracs)
        if top == 0:
            raise ValueError("all coefficients are zero")
        ratios = [f / top for f in fracs]
        den = math.lcm(*[r.denominator for r in ratios])
        nums = tuple(int(r * den) for r in ratios)
        return cls(nums, den, float(top), label)

    @property
    def L(self) -> int:
        return len(self.numerators)

    @property
    def coefficients(self) -> np.ndarray:
        return self.scale * np.array(self.numerators, dtype=float) / self.denominator

    @property
    def mean_abs(self) -> float:
        """Spatial mean of |c_j| for the normalized sequence."""
        return float(np.mean(np.abs(self.numerators)) / self.denominator)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "numerators": list(self.numerators),
            "denominator": self.denominator,
            "scale": self.scale,
        }


# Sequences quoted for L = 6.
PAPER_COMPLIANT_L6 = ProtectionSequence((-115, 116, -118, 122, -130, 146), 146, label="paper_compliant_L6")
PAPER_NONCOMPLIANT_L6 = ProtectionSequence((-115, 116, -118, 130, -122, 145), 145, label="paper_noncompliant_L6")


def staggered_unit(L: int) -> ProtectionSequence:
    """c_j = (-1)^j."""
    return ProtectionSequence(tuple((-1) ** j for j in range(1, L + 1)), 1, label="staggered_unit")


def uniform_unit(L: int) -> ProtectionSequence:
    return ProtectionSequence((1,) * L, 1, label="uniform_unit")


@dataclass(frozen=True, eq=False)
class GaugeSectorTable:
    """Assignment of every computational basis state to its sector g."""

    L: int
    basis_to_sector: np.ndarray  # (dim, L) integer g vectors
    sectors: np.ndarray  # (n_sectors, L), sorted lexicographically
    sector_index: np.ndarray  # (dim,) row of ``sectors`` for each basis state
    sector_members: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def n_sectors(self) -> int:
        return len(self.sectors)

    @property
    def dim(self) -> int:
        return len(self.sector_index)

    @cached_property
    def zero_sector(self) -> int:
        hits = np.flatnonzero(~np.any(self.sectors, axis=1))
        if hits.size == 0:
            raise ValueError("no g = 0 sector present")
        return int(hits[0])

    def find(self, g) -> int:
        hits = np.flatnonzero(np.all(self.sectors == np.asarray(g), axis=1))
        if hits.size == 0:
            raise KeyError(f"sector {tuple(g)} is not allowed")
        return int(hits[0])

    def projector_diagonal(self, sector: int) -> np.ndarray:
        """0/1 diagonal of the projector P_g."""
        return (self.sector_index == sector).astype(float)

    def violation_weights(self) -> np.ndarray:
        """(1/L) sum_j g_j^2 for every basis state."""
        return np.sum(self.basis_to_sector.astype(float) ** 2, axis=1) / self.L

    def staggering_corrected(self) -> np.ndarray:
        """(-1)^j g_j for every allowed sector, values in {-1, 0, 1, 2}."""
        signs = np.array([(-1) ** j for j in range(1, self.L + 1)])
        return self.sectors * signs


def sector_map(basis: SpinBasis) -> GaugeSectorTable:
    if basis.L > MAX_ENUMERATION_L:
        raise ResourceError(f"sector enumeration limited to L <= {MAX_ENUMERATION_L}, got {basis.L}")
    g = gauss_values(basis).T.copy()
    sectors, inverse = np.unique(g, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    splits = np.cumsum(np.bincount(inverse, minlength=len(sectors)))[:-1]
    members = tuple(np.split(order, splits))
    return GaugeSectorTable(basis.L, g, sectors, inverse, members)


def has_forbidden_neighbors(table: GaugeSectorTable) -> bool:
    """True if any sector has staggering-corrected neighbours (2, -1) or (-1, 2)."""
    h = table.staggering_corrected()
    nxt = np.roll(h, -1, axis=1)
    bad = ((h == 2) & (nxt == -1)) | ((h == -1) & (nxt == 2))
    return bool(np.any(bad))


# ---------------------------------------------------------------- compliance

@dataclass(frozen=True)
class ComplianceReport:
    compliant: bool
    gap_D: float
    gap_numerator: int
    denominator: int
    fully_nondegenerate: bool
    witness: tuple[int, ...] | None

    def to_dict(self) -> dict:
        return {
            "compliant": self.compliant,
            "gap_D": self.gap_D,
            "gap_numerator": self.gap_numerator,
            "denominator": self.denominator,
            "fully_nondegenerate": self.fully_nondegenerate,
            "witness": list(self.witness) if self.witness is not None else None,
        }


def _exact_dot(sectors: np.ndarray, numerators) -> np.ndarray:
    nums = [int(n) for n in numerators]
    bound = max(abs(n) for n in nums) * 2 * len(nums)
    if bound < 2**62:
        return sectors.astype(np.int64) @ np.array(nums, dtype=np.int64)
    return sectors.astype(object) @ np.array(nums, dtype=object)


def sector_energies(sequence: ProtectionSequence, table: GaugeSectorTable) -> np.ndarray:
    """Integer values sum_j numerators_j g_j for every allowed sector."""
    if sequence.L != table.L:
        raise ValueError(f"sequence length {sequence.L} does not match L={table.L}")
    return _exact_dot(table.sectors, sequence.numerators)


def _min_norm_first(rows: np.ndarray, sectors: np.ndarray) -> np.ndarray:
    """Order candidate rows by ||g||^2, then lexicographically."""
    norms = np.sum(sectors[rows] ** 2, axis=1)
    return rows[np.lexsort((*(sectors[rows].T[::-1]), norms))]


def check_compliance(sequence: ProtectionSequence, table: GaugeSectorTable) -> ComplianceReport:
    vals = sector_energies(sequence, table)
    nonzero_g = np.flatnonzero(np.any(table.sectors, axis=1))
    hit = nonzero_g[vals[nonzero_g] == 0]
    if hit.size:
        witness = tuple(int(x) for x in table.sectors[_min_norm_first(hit, table.sectors)[0]])
        gap_num = 0
    else:
        witness = None
        gap_num = int(min(abs(v) for v in vals[nonzero_g])) if nonzero_g.size else 0
    distinct = len(set(int(v) for v in vals))
    return ComplianceReport(
        compliant=hit.size == 0 and nonzero_g.size > 0,
        gap_D=gap_num / sequence.denominator,
        gap_numerator=gap_num,
        denominator=sequence.denominator,
        fully_nondegenerate=distinct == table.n_sectors,
        witness=witness,
    )


def degenerate_sectors(sequence: ProtectionSequence, table: GaugeSectorTable) -> np.ndarray:
    """All allowed g != 0 with c.g = 0, smallest ||g||^2 first."""
    vals = sector_energies(sequence, table)
    nonzero_g = np.flatnonzero(np.any(table.sectors, axis=1))
    hit = nonzero_g[vals[nonzero_g] == 0]
    if hit.size == 0:
        return np.empty((0, table.L), dtype=np.int64)
    return table.sectors[_min_norm_first(hit, table.sectors)]


def minimal_degenerate_sectors(sequence: ProtectionSequence, table: GaugeSectorTable) -> np.ndarray:
    """The degenerate sectors of minimal ||g||^2 (empty if the sequence is compliant)."""
    deg = degenerate_sectors(sequence, table)
    if len(deg) == 0:
        return deg
    norms = np.sum(deg ** 2, axis=1)
    return deg[norms == norms.min()]


def find_compliant_sequence(
    L: int, max_denominator: int, table: GaugeSectorTable | None = None
) -> ProtectionSequence | None:
    """Smallest-denominator compliant sequence of the form c_j = (-1)^j a_j / d.

    Denominators are tried in increasing order and, for each, the positive
    integer vectors a (with max a = d) in lexicographic order. Returns None
    when nothing is found up to ``max_denominator``.
    """
    if max_denominator < 1:
        return None
    if table is None:
        table = sector_map(SpinBasis(L))
    h = table.staggering_corrected()
    h = h[np.any(h, axis=1)]
    # Group sector rows by the last site they touch so prefixes can be pruned.
    last = np.array([np.flatnonzero(row).max() for row in h])
    by_last = [h[last == k] for k in range(L)]
    for den in range(1, max_denominator + 1):
        found = _search_denominator(L, den, by_last)
        if found is not None:
            nums = tuple((-1) ** (j + 1) * a for j, a in enumerate(found))
            return ProtectionSequence(nums, den, label=f"searched_L{L}_d{den}")
    return None


def _search_denominator(L: int, den: int, by_last: list[np.ndarray]):
    a = np.zeros(L, dtype=np.int64)

    def descend(k: int, has_top: bool):
        rows = by_last[k]
        forbidden = set()
        if rows.size:
            # a_k = v closes a zero sum iff v = -partial / h_k for some row.
            partial = rows[:, :k] @ a[:k]
            hk = rows[:, k]
            ok = (partial % hk) == 0
            forbidden = set((-partial[ok] // hk[ok]).tolist())
        choices = range(1, den + 1)
        if k == L - 1 and not has_top:
            choices = (den,)
        for v in choices:
            if v in forbidden:
                continue
            a[k] = v
            if k == L - 1:
                return a.copy()
            res = descend(k + 1, has_top or v == den)
            if res is not None:
                return res
        a[k] = 0
        return None

    return descend(0, False)


def build_superlattice_sequence(L: int, Delta: float, U: float, delta: float) -> ProtectionSequence:
    """Tilted-superlattice penalty c_j = (-1)^j [Delta j + (U - delta + Delta/2)]."""
    if L < 2:
        raise ValueError("need L >= 2")
    raw = [(-1) ** j * (Delta * j + (U - delta + Delta / 2)) for j in range(1, L + 1)]
    return ProtectionSequence.from_reals(raw, label=f"superlattice(D={Delta},U={U},d={delta})")


def degenerate_level_labels(sequence: ProtectionSequence, table: GaugeSectorTable) -> np.ndarray:
    """Integer eigenvalue label of H_G (in units of 1/denominator) for each basis state."""
    return np.asarray(sector_energies(sequence, table))[table.sector_index]


def degeneracy_split_check(sequence: ProtectionSequence, h1: Operator, table: GaugeSectorTable) -> bool:
    """True iff P_g1 H1 P_g2 = 0 for every distinct pair of sectors with c.g1 = c.g2."""
    if h1.dim != table.dim:
        raise ValueError(f"operator dimension {h1.dim} does not match table dimension {table.dim}")
    if h1.diagonal:
        return True
    energy = degenerate_level_labels(sequence, table)
    sec = table.sector_index
    if h1.is_sparse:
        coo = sp.coo_array(h1.data)
        rows, cols, vals = coo.row, coo.col, coo.data
    else:
        rows, cols = np.nonzero(np.abs(h1.data) >= BLOCK_ATOL)
        vals = h1.data[rows, cols]
    big = np.abs(vals) >= BLOCK_ATOL
    rows, cols = rows[big], cols[big]
    offending = (sec[rows] != sec[cols]) & (energy[rows] == energy[cols])
    return not bool(np.any(offending))


def sequence_report_json(sequence: ProtectionSequence, report: ComplianceReport) -> str:
    return json.dumps({"sequence": sequence.to_dict(), "report": report.to_dict()}, indent=2)
