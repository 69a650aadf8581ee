import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from ramanspin.evolve import (PropagationError, expm_hermitian, expm_krylov, propagate,
                              propagate_twostep, quasienergy_distance, range_factor,
                              time_reversed, trotter_bound, trotter_product, trotter_xxz,
                              write_trace)
from ramanspin.floquet import heff1
from ramanspin.hamiltonian import (FourierSeries, SectorOperator, build_sector, build_xy,
                                   build_zz, full_space, global_rotation, hs_target,
                                   pauli_string, xxz_eta_target)
from ramanspin.lattice import build_chain


def _rand_herm(d, rng):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return A + A.conj().T


def test_static_series_is_exact():
    rng = np.random.default_rng(0)
    sec = build_sector(4, 2)
    H = _rand_herm(sec.dim, rng)
    ser = FourierSeries(3.0, {0: SectorOperator(sec, sp.csr_matrix(H))})
    r = propagate(ser, 1.7)
    np.testing.assert_allclose(r.U, expm_hermitian(H, 1.7), atol=1e-12)
    assert r.unitarity_error() <= 1e-10


def test_zero_time_identity(hs6):
    r = propagate(hs6, 0.0)
    np.testing.assert_array_equal(r.U, np.eye(hs6.sector.dim))


def test_substep_floor(hs6):
    with pytest.raises(ValueError):
        propagate(hs6, 1.0, substeps_per_period=8)


def test_driven_unitary_and_richardson(hs6):
    ser = FourierSeries(40.0, hs6.components)
    r = propagate(ser, 2 * np.pi / 40.0 * 3, 32)
    assert r.unitarity_error() <= 1e-10
    fine = propagate(ser, 2 * np.pi / 40.0 * 3, 256)
    # the estimate must cover the actual change under refinement
    assert np.abs(r.U - fine.U).max() <= 2 * r.richardson_error
    with pytest.raises(PropagationError) as exc:
        propagate(ser, 2 * np.pi / 40.0 * 3, 16, rtol=1e-14)
    assert exc.value.coarse is not None and exc.value.fine is not None


def test_cfm4_converges_faster(hs6):
    ser = FourierSeries(40.0, hs6.components)
    T = 2 * np.pi / 40.0
    ref = propagate(ser, T, 512, "cfm4").U
    e2 = np.abs(propagate(ser, T, 32).U - ref).max()
    e4 = np.abs(propagate(ser, T, 32, "cfm4").U - ref).max()
    assert e4 < e2 / 10


def test_krylov_matches_dense():
    rng = np.random.default_rng(2)
    H = _rand_herm(60, rng)
    psi = rng.normal(size=60) + 1j * rng.normal(size=60)
    np.testing.assert_allclose(expm_krylov(sp.csr_matrix(H), psi, 0.9, m=20),
                               expm_hermitian(H, 0.9) @ psi, atol=1e-9)
    np.testing.assert_array_equal(expm_krylov(H, psi, 0.0), psi)


def test_state_propagation_matches_unitary(hs6):
    ser = FourierSeries(40.0, hs6.components)
    rng = np.random.default_rng(3)
    psi = rng.normal(size=ser.sector.dim) + 0j
    psi /= np.linalg.norm(psi)
    t = 2 * np.pi / 40.0 * 2
    np.testing.assert_allclose(propagate(ser, t, 64, psi=psi).U, propagate(ser, t, 64).U @ psi,
                               atol=1e-12)


def test_hs_fidelity_at_stroboscopic_time(hs6):
    # 64 periods at delta/J_1 = 40 is the stroboscopic time closest to t J_1 = 10
    ser = FourierSeries(40.0, hs6.components)
    t = 64 * 2 * np.pi / 40.0
    H0 = hs6.get(0).toarray()
    psi = np.linalg.eigh(H0)[1][:, 0]
    out = propagate(ser, t, 64, psi=psi).U
    assert abs(np.vdot(expm_hermitian(H0, t) @ psi, out)) ** 2 >= 0.99


def test_time_reversal_and_twostep(hs6):
    ser = FourierSeries(80.0, hs6.components)
    rev = time_reversed(ser)
    np.testing.assert_allclose(rev.at(0.013).toarray(), ser.at(-0.013).toarray())
    r = propagate_twostep(ser, 1, 64)
    assert r.unitarity_error() <= 1e-10
    # one two-step period is closer to exp(-i H_0 2T) than the one-step drive over 2T
    T = 2 * np.pi / 80.0
    H0 = ser.get(0).toarray()
    one = propagate(ser, 2 * T, 64).U
    assert quasienergy_distance(r.U, H0, 2 * T) < quasienergy_distance(one, H0, 2 * T)


def test_commuting_split_is_exact():
    N = 2
    XY = pauli_string(N, {0: "x", 1: "x"}) + pauli_string(N, {0: "y", 1: "y"})
    ZZ = pauli_string(N, {0: "z", 1: "z"})
    U = trotter_xxz(XY, ZZ, 1.3, 3)
    np.testing.assert_allclose(U, expm_hermitian(XY + ZZ, 1.3), atol=1e-12)
    b = trotter_bound(XY, ZZ, 1.3, 3)
    assert b.exact == 0.0


def _xxz_chain(N, eta=3, theta=np.pi / 4):
    lat = build_chain(N)
    Jxy, Jz = xxz_eta_target(lat, 1.0, eta, theta)
    fs = full_space(N)
    return build_xy(2 * Jxy.astype(complex), fs).toarray(), build_zz(Jz, fs).toarray(), Jxy


@pytest.mark.parametrize("N", [3, 5, 7])
def test_trotter_error_halves(N):
    Hxy, Hzz, _ = _xxz_chain(N)
    U = expm_hermitian(Hxy + Hzz, 1.0)
    errs = [np.linalg.norm(trotter_xxz(Hxy, Hzz, 1.0, n) - U, 2) for n in (8, 16, 32)]
    for a, b in zip(errs, errs[1:]):
        assert 1.6 <= a / b <= 2.4


def test_rotated_zz_segment():
    # R_y(pi/2) maps X to -Z, so XX rotates into ZZ
    N = 3
    Hxy, Hzz, _ = _xxz_chain(N)
    lat = build_chain(N)
    _, Jz = xxz_eta_target(lat, 1.0, 3, np.pi / 4)
    XX = sum(Jz[m, n] * pauli_string(N, {m: "x", n: "x"}) for m in range(N) for n in range(m + 1, N))
    R = global_rotation(N, "y", np.pi / 2)
    np.testing.assert_allclose(R @ XX @ R.conj().T, Hzz, atol=1e-12)
    np.testing.assert_allclose(trotter_xxz(Hxy, XX, 0.7, 9, rotation=R),
                               trotter_xxz(Hxy, Hzz, 0.7, 9), atol=1e-12)


@pytest.mark.parametrize("N", [4, 6, 8])
def test_hs_three_segment_within_bound(N):
    J = hs_target(N, np.sin(np.pi / N) ** 2)
    Hxy = build_xy(J, full_space(N)).toarray()
    Rx, Ry = global_rotation(N, "x", np.pi / 2), global_rotation(N, "y", np.pi / 2)
    gens = [Hxy, Rx @ Hxy @ Rx.conj().T, Ry @ Hxy @ Ry.conj().T]
    heis = sum(J[m, n].real * sum(pauli_string(N, {m: o, n: o}) for o in "xyz")
               for m in range(N) for n in range(m + 1, N))
    np.testing.assert_allclose(sum(gens), heis, atol=1e-10)
    U = expm_hermitian(heis, 1.0)
    for nt in (8, 16, 32, 64):
        V = trotter_xxz(Hxy, Hxy, 1.0, nt, rotation=[Rx, Ry])
        assert np.linalg.norm(V - U, 2) <= trotter_bound(gens[0], gens[1:], 1.0, nt).exact


def test_bound_halves_and_range_factor():
    Hxy, Hzz, Jxy = _xxz_chain(5)
    a = trotter_bound(Hxy, Hzz, 2.0, 10, Jxy)
    b = trotter_bound(Hxy, Hzz, 2.0, 20, Jxy)
    assert b.exact == a.exact / 2 and b.estimate == a.estimate / 2
    _, _, Jnn = _xxz_chain(5, "NN")
    assert range_factor(Jnn) == 1.0
    with pytest.raises(ValueError):
        trotter_product([Hxy], 1.0, 0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10 ** 6), t=st.floats(0.05, 2.0), nt=st.integers(4, 40))
def test_random_split_within_bound(seed, t, nt):
    rng = np.random.default_rng(seed)
    A, B = _rand_herm(6, rng), _rand_herm(6, rng)
    err = np.linalg.norm(trotter_product([A, B], t, nt) - expm_hermitian(A + B, t), 2)
    assert err <= trotter_bound(A, B, t, nt).exact * (1 + 1e-9) + 1e-12 or err <= 1e-12


def test_write_trace(tmp_path):
    write_trace(tmp_path / "tr.csv", [(0.5, 1e-3, 2e-3)])
    assert (tmp_path / "tr.csv").read_text().splitlines()[0] == "t,error,bound"
