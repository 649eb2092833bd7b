import numpy as np
import pytest

from gaugeprot.core import SpinBasis, commutator
from gaugeprot.model import (
    ModelParams,
    assemble,
    build_gauss,
    build_h0,
    build_h1,
    build_hj,
    build_protection,
    gauss_values,
    particle_state_index,
    staggered_vacuum,
    staggered_vacuum_index,
    two_particle_state,
)
from gaugeprot.gauge import ProtectionSequence

import oracles


@pytest.mark.parametrize("L", [2, 4])
def test_h0_matches_kron_oracle(L):
    p = ModelParams(L, mu=0.7)
    assert np.allclose(build_h0(p).toarray(), oracles.h0(L, 0.7))
    assert np.allclose(build_hj(p.basis).toarray(), oracles.h_j(L))


@pytest.mark.parametrize("L", [2, 4])
def test_error_terms_match_kron_oracle(L):
    b = SpinBasis(L)
    assert np.allclose(build_h1("local", b).toarray(), oracles.local_error(L))
    assert np.allclose(build_h1("extreme", b).toarray(), oracles.extreme_error(L))


@pytest.mark.parametrize("L", [2, 4])
def test_gauss_generators_match_oracle_and_commute_with_h0(L):
    p = ModelParams(L)
    h0 = build_h0(p)
    for j in range(1, L + 1):
        g = build_gauss(j, p.basis)
        assert np.allclose(np.diag(oracles.gauss(j, L)), g.data)
        assert commutator(h0, g).max_abs() < 1e-12


def test_gauss_eigenvalues():
    g = gauss_values(SpinBasis(4))
    for j in range(1, 5):
        assert set(np.unique(g[j - 1])) == {(-1) ** j * v for v in (-1, 0, 1, 2)}


def test_errors_break_gauss_law():
    p = ModelParams(2)
    for kind in ("local", "extreme"):
        h1 = build_h1(kind, p.basis)
        assert commutator(h1, build_gauss(1, p.basis)).max_abs() > 0.1


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(3)
    with pytest.raises(ValueError):
        ModelParams(4, error_kind="nonlocal")
    with pytest.raises(ValueError):
        ModelParams(4, J=2.0)
    assert ModelParams(4).with_(V=3.0).V == 3.0


def test_protection_terms():
    b = SpinBasis(2)
    seq = ProtectionSequence((-1, 1), 1)
    lin = build_protection("linear", b, seq).toarray()
    ref = -oracles.gauss(1, 2) + oracles.gauss(2, 2)
    assert np.allclose(lin, ref)
    quad = build_protection("quadratic", b).toarray()
    assert np.allclose(quad, oracles.gauss(1, 2) @ oracles.gauss(1, 2) + oracles.gauss(2, 2) @ oracles.gauss(2, 2))
    with pytest.raises(ValueError):
        build_protection("linear", b)
    with pytest.raises(ValueError):
        build_protection("linear", SpinBasis(4), seq)


def test_assemble_sums_pieces():
    p = ModelParams(2, mu=0.5, lam=0.1, V=2.0, error_kind="local")
    seq = ProtectionSequence((-1, 1), 1)
    h = assemble(p, seq).toarray()
    ref = oracles.h0(2, 0.5) + 0.1 * oracles.local_error(2) + 2.0 * (-oracles.gauss(1, 2) + oracles.gauss(2, 2))
    assert np.allclose(h, ref)


def test_staggered_vacuum_layout():
    b = SpinBasis(6)
    # matter empty (down = 1); links (j,j+1) down for odd j, up for even j
    assert b.bitstring(staggered_vacuum_index(b)) == "111011101110"
    assert b.bitstring(staggered_vacuum_index(b, "up")) == "101110111011"
    psi = staggered_vacuum(b)
    assert np.all(gauss_values(b)[:, np.argmax(np.abs(psi))] == 0)


def test_two_particle_state():
    b = SpinBasis(6)
    bits = b.bitstring(particle_state_index(b, (1, 4)))
    matter, links = bits[0::2], bits[1::2]
    assert matter == "011011"
    # links between sites 1 and 4 read down, up, down
    assert links[:3] == "101"
    psi = two_particle_state(b)
    assert np.all(gauss_values(b)[:, np.argmax(np.abs(psi))] == 0)
