import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ramanspin.drive import (BRICKWALL_COS_PHI, CouplingKernel, RamanDrive, Sideband,
                             SolverError, autocorrelation, brickwall_drive, chain_drive,
                             chiral_flux_drive, coupling_matrix, solve_sidebands_1d, stark_series)
from ramanspin.hamiltonian import hs_profile, hs_target
from ramanspin.lattice import build_chain, build_square


def _bond_values(lat, J, v):
    """{(x, y): J[n + v, n]} over sites n whose partner exists."""
    pos = np.rint(lat.positions).astype(int)
    idx = {tuple(p): i for i, p in enumerate(pos)}
    out = {}
    for p, n in idx.items():
        m = idx.get((p[0] + v[0], p[1] + v[1]))
        if m is not None:
            out[p] = J[m, n]
    return out


def test_nearest_neighbour_pair():
    X0, X1 = 2.0, 0.3 - 0.1j
    J = coupling_matrix(build_chain(5), chain_drive([X0, X1]))
    for m in range(5):
        for n in range(5):
            want = X0 * np.conj(X1) if m == n + 1 else (np.conj(X0 * np.conj(X1)) if n == m + 1 else 0)
            assert J[m, n] == pytest.approx(want)


def test_empty_drive():
    assert not coupling_matrix(build_chain(4), RamanDrive()).any()


def test_kernels():
    r = np.array([1.0, 2.0, 3.0])
    assert np.all(CouplingKernel()(r) == 1.0)
    np.testing.assert_allclose(CouplingKernel("exp1d", 2.0, 1.5)(r), 2.0 * np.exp(-r / 1.5))
    k = CouplingKernel("bessel2d", 1.0, 2.0)(r)
    assert k[0] == pytest.approx(1.0) and np.all(np.diff(k) < 0)
    with pytest.raises(ValueError):
        CouplingKernel("exp1d")


def test_chiral_flux_phases():
    lat = build_square(5, 5)
    J = coupling_matrix(lat, chiral_flux_drive(1.3, zeta=1.0), pump_pairs_only=True)
    for v in ((1, 0), (0, 1)):
        for (x, y), j in _bond_values(lat, J, v).items():
            s = 1 - 2 * ((x - y) % 2)
            assert abs(j) == pytest.approx(1.3)
            sign = -1 if v == (1, 0) else 1
            assert np.angle(j) == pytest.approx(sign * s * np.pi / 4)


def test_chiral_flux_real_without_flux():
    lat = build_square(4, 4)
    J = coupling_matrix(lat, chiral_flux_drive(0.8), pump_pairs_only=True)
    for v in ((1, 0), (0, 1)):
        vals = np.array(list(_bond_values(lat, J, v).values()))
        np.testing.assert_allclose(vals, 0.8, atol=1e-14)


def test_chiral_flux_t2_channel():
    lat = build_square(4, 4)
    J = coupling_matrix(lat, chiral_flux_drive(0.0, t2=0.4), pump_pairs_only=True)
    for v, sign in (((1, 1), -1), ((1, -1), 1)):
        for (x, y), j in _bond_values(lat, J, v).items():
            s = 1 - 2 * ((x - y) % 2)
            assert j == pytest.approx(sign * 0.4 * s)
    assert not _bond_values(lat, J, (1, 0)) or np.allclose(list(_bond_values(lat, J, (1, 0)).values()), 0)


def test_amplitude_mode_matches_frequency_mode():
    lat = build_square(4, 4)
    a = coupling_matrix(lat, chiral_flux_drive(1.0, 0.5, 0.1, 0.7), pump_pairs_only=True)
    b = coupling_matrix(lat, chiral_flux_drive(1.0, 0.5, 0.1, 0.7, mode="amplitude"),
                        pump_pairs_only=True)
    np.testing.assert_allclose(a, b, atol=1e-14)


def test_brickwall_phi_zero_real():
    J = coupling_matrix(build_square(4, 4), brickwall_drive(1.0, 0.3, phi=0.0), pump_pairs_only=True)
    assert np.abs(J.imag).max() < 1e-14
    assert BRICKWALL_COS_PHI == pytest.approx(3 * np.sqrt(3 / 43))


def test_stark_single_sideband():
    st_ = stark_series(build_chain(4), chain_drive([1.5]), delta=1.0)
    assert st_.components == {}
    np.testing.assert_allclose(st_.offset, -1.5 ** 2)


def test_stark_copropagating_site_independent():
    st_ = stark_series(build_chain(5), chain_drive([1.0, 0.2]), delta=1.0)
    assert set(st_.components) == {-1, 1}
    assert st_.site_independent()


def test_stark_chiral_sublattices_differ():
    lat = build_square(4, 4)
    st_ = stark_series(lat, chiral_flux_drive(1.0, 0.5, 0.1, 1.0))
    assert not st_.site_independent()


def test_perturbative_two_sites():
    sol = solve_sidebands_1d([0.5], mode="perturbative", X0=10.0)
    np.testing.assert_allclose(sol.amplitudes, [10.0, 0.05])
    J = coupling_matrix(build_chain(2), sol.drive())
    assert J[1, 0] == pytest.approx(0.5)


@pytest.mark.parametrize("N", [4, 8, 12, 16, 24])
def test_hs_forward_map(N):
    sol = solve_sidebands_1d(hs_profile(N))
    J = coupling_matrix(build_chain(N), sol.drive())
    T = hs_target(N)
    off = ~np.eye(N, dtype=bool)
    assert np.max(np.abs(J[off] - T[off]) / np.abs(T[off])) <= 1e-6


def test_hs_intensity_trend():
    Ns = [8, 16, 24, 32, 40]
    sols = [solve_sidebands_1d(hs_profile(N, np.sin(np.pi / N) ** 2)) for N in Ns]
    I = [s.intensity for s in sols]
    # max/median, since single sidebands can come out nearly zero and make max/min erratic
    spread = [np.abs(s.amplitudes).max() / np.median(np.abs(s.amplitudes)) for s in sols]
    # increments shrink towards a plateau while the amplitude spread keeps growing
    assert all(abs(I[i + 1] - I[i]) >= abs(I[i + 2] - I[i + 1]) for i in range(len(I) - 2))
    assert all(np.diff(spread) > 0)


def test_solver_trace_and_residual(tmp_path):
    sol = solve_sidebands_1d(hs_profile(10))
    assert sol.trace and sol.residual <= 1e-8
    sol.write_trace(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().startswith("iteration,residual,total_intensity")


def test_solver_failure_reports_best():
    # a single iteration from the perturbative-free seed cannot satisfy a tight acceptance
    with pytest.raises(SolverError) as exc:
        solve_sidebands_1d(hs_profile(12), max_iter=0, accept=1e-30, margin=1e-2)
    assert np.isfinite(exc.value.best_residual)


def test_solver_rejects_bad_input():
    with pytest.raises(ValueError):
        solve_sidebands_1d([])
    with pytest.raises(ValueError):
        solve_sidebands_1d([1.0], mode="nope")


@settings(max_examples=30, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
                min_size=1, max_size=6))
def test_autocorrelation_is_forward_map(X):
    N = len(X)
    J = coupling_matrix(build_chain(N), chain_drive(X))
    r = autocorrelation(X)
    for k in range(1, N):
        np.testing.assert_allclose(np.diag(J, -k), r[k], atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.01, 2.0), min_size=1, max_size=6))
def test_perturbative_first_order(target):
    X0 = 50.0
    sol = solve_sidebands_1d(target, mode="perturbative", X0=X0)
    J = coupling_matrix(build_chain(len(target) + 1), sol.drive())
    got = np.array([J[k, 0] for k in range(1, len(target) + 1)])
    assert np.max(np.abs(got - target)) <= 10 * (max(target) / X0) ** 2 * len(target)


@settings(max_examples=25, deadline=None)
@given(t1=st.floats(0, 2), t2=st.floats(0, 2), t3=st.floats(0, 1), z=st.floats(0, 3),
       mode=st.sampled_from(["frequency", "amplitude"]))
def test_drive_json_roundtrip(t1, t2, t3, z, mode):
    d = chiral_flux_drive(t1, t2, t3, z, mode=mode)
    assert RamanDrive.from_json(d.to_json()) == d


def test_amplitude_mode_requires_partners():
    with pytest.raises(ValueError):
        RamanDrive((Sideband.single(0.0, 1.0, pump=True), Sideband.single(1.0, 0.1)), "amplitude")
