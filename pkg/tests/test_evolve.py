import warnings

import numpy as np
import pytest
from scipy.linalg import expm

from gaugeprot.core import SpinBasis
from gaugeprot.evolve import (
    ApproximateResultWarning,
    ObservableDynamics,
    gauge_violation,
    infinite_time_violation,
    quench_spectrum,
    run_trajectory,
    running_average_trapezoid,
    violation_weights,
    zeno_hamiltonian,
    zeno_residual,
)
from gaugeprot.gauge import ProtectionSequence
from gaugeprot.model import ModelParams, assemble, build_gauss, staggered_vacuum

import oracles

SEQ4 = ProtectionSequence((-1, 5, -4, 7), 7)


def test_gauge_violation_two_ways():
    b = SpinBasis(2)
    rng = np.random.default_rng(0)
    psi = rng.normal(size=16) + 1j * rng.normal(size=16)
    psi /= np.linalg.norm(psi)
    ops = [build_gauss(j, b) for j in (1, 2)]
    ref = np.real(sum(psi.conj() @ (oracles.gauss(j, 2) @ oracles.gauss(j, 2)) @ psi for j in (1, 2)) / 2)
    assert gauge_violation(psi, ops) == pytest.approx(ref)
    assert gauge_violation(psi, violation_weights(2)) == pytest.approx(ref)
    with pytest.raises(ValueError):
        gauge_violation(psi[:8], ops)


def test_trajectory_matches_expm_oracle():
    p = ModelParams(2, V=1.3, error_kind="extreme")
    seq = ProtectionSequence((-1, 1), 1)
    psi = staggered_vacuum(p.basis)
    times = np.array([0.3, 1.0, 4.0])
    tr = run_trajectory(p, seq, psi, times)
    h = assemble(p, seq).toarray()
    w = violation_weights(2)
    for t, e in zip(times, tr.epsilon):
        phi = expm(-1j * h * t) @ psi
        assert e == pytest.approx(np.abs(phi) ** 2 @ w, abs=1e-12)


def test_lambda_zero_conserves_gauge():
    p = ModelParams(4, lam=0.0, V=0.0)
    tr = run_trajectory(p, None, staggered_vacuum(p.basis))
    assert np.all(tr.epsilon < 1e-10)
    assert np.all(np.abs(tr.norms - 1) < 1e-9)


def test_exact_average_against_fine_trapezoid():
    p = ModelParams(2, V=0.7, error_kind="local")
    seq = ProtectionSequence((-1, 1), 1)
    psi = staggered_vacuum(p.basis)
    times = np.linspace(1e-3, 30, 30001)
    trap = run_trajectory(p, seq, psi, times, average="trapezoid")
    exact = run_trajectory(p, seq, psi, times[::3000], average="exact")
    assert np.allclose(trap.epsilon_avg[::3000][1:], exact.epsilon_avg[1:], atol=1e-6)


def test_running_average_trapezoid_constant():
    t = np.array([1.0, 2.0, 4.0])
    assert np.allclose(running_average_trapezoid(t, np.full(3, 0.5), 0.5), 0.5)


def test_time_grid_validation():
    p = ModelParams(2)
    psi = staggered_vacuum(p.basis)
    with pytest.raises(ValueError):
        run_trajectory(p, ProtectionSequence((-1, 1), 1), psi, [1.0, np.nan])
    with pytest.raises(ValueError):
        run_trajectory(p, ProtectionSequence((-1, 1), 1), psi, [2.0, 1.0])
    with pytest.raises(ValueError):
        run_trajectory(p, ProtectionSequence((-1, 1), 1), 2 * psi, [1.0])


def test_diagonal_ensemble_matches_long_time_average():
    p = ModelParams(4, V=10.0, error_kind="local")
    psi = staggered_vacuum(p.basis)
    a = infinite_time_violation(p, SEQ4, psi)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ApproximateResultWarning)
        b = infinite_time_violation(p, SEQ4, psi, mode="diagonal_ensemble")
    assert a == pytest.approx(b, rel=1e-6)


def test_degenerate_spectrum_warns():
    p = ModelParams(4, V=1.0, error_kind="local", protection_kind="quadratic")
    with pytest.warns(ApproximateResultWarning):
        infinite_time_violation(p, None, staggered_vacuum(p.basis), mode="diagonal_ensemble")


def test_closed_form_average_at_short_time():
    p = ModelParams(2, V=0.4, error_kind="extreme")
    seq = ProtectionSequence((-1, 1), 1)
    psi = staggered_vacuum(p.basis)
    spec = quench_spectrum(p, seq)
    dyn = ObservableDynamics(spec, psi, violation_weights(2))
    ts = np.linspace(0, 2.0, 20001)[1:]
    tr = run_trajectory(p, seq, psi, ts)
    assert dyn.running_average(2.0) == pytest.approx(tr.epsilon_avg[-1], abs=1e-7)
    with pytest.raises(ValueError):
        dyn.running_average(0.0)


def test_zeno_hamiltonian_commutes_with_protection():
    p = ModelParams(4, V=50.0, error_kind="extreme")
    hz = zeno_hamiltonian(p, SEQ4).toarray()
    from gaugeprot.model import build_protection

    hg = np.diag(build_protection("linear", p.basis, SEQ4).data)
    assert np.max(np.abs(hz @ hg - hg @ hz)) < 1e-9


def test_zeno_residual_shrinks_with_V():
    p = ModelParams(4, error_kind="local")
    r = zeno_residual(p, SEQ4, staggered_vacuum(p.basis), 1.0, [10.0, 100.0, 1000.0])
    assert r[2] < r[0]
    with pytest.raises(ValueError):
        zeno_residual(p, SEQ4, staggered_vacuum(p.basis), 1.0, [10.0, 1.0])


def test_trajectory_csv(tmp_path):
    p = ModelParams(2, V=1.0)
    tr = run_trajectory(p, ProtectionSequence((-1, 1), 1), staggered_vacuum(p.basis), [0.5, 1.0, 2.0])
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,epsilon,epsilon_avg" and len(lines) == 4
