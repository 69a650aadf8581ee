import numpy as np
import pytest
import scipy.sparse as sp

from ramanspin.drive import chain_drive, chiral_flux_drive, solve_sidebands_1d, stark_series
from ramanspin.evolve import propagate, quasienergy_distance
from ramanspin.floquet import (ParityError, butterfly_stark_hamiltonian, cross_harmonic_term,
                               first_order_sum, heff1, heff1_terms, heff2, hs_comparison,
                               loglog_slope, nested_stark_commutator, parity_error,
                               stark_error2, twostep_coefficients, twostep_series, twostep_stark)
from ramanspin.hamiltonian import (FourierSeries, SectorOperator, build_sector, full_space,
                                   hs_profile, pauli_string)
from ramanspin.lattice import build_chain, build_square


def _random_series(seed, P=2, N=3, delta=1.0):
    rng = np.random.default_rng(seed)
    sec = build_sector(N, 1)
    d = sec.dim
    comps = {}
    H0 = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    comps[0] = SectorOperator(sec, sp.csr_matrix(H0 + H0.conj().T))
    for p in range(1, P + 1):
        A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        comps[p] = SectorOperator(sec, sp.csr_matrix(A))
        comps[-p] = SectorOperator(sec, sp.csr_matrix(A.conj().T))
    return FourierSeries(delta, comps)


def _twostep_quadrature(series, q, shift, n=400):
    """(1/2T) int_0^2T f(t + shift) exp(-i q (delta/2) t) dt for the explicit two-step signal."""
    d = series.delta
    T = 2 * np.pi / d
    x, w = np.polynomial.legendre.leggauss(n)

    def f(t):
        t = np.mod(t, 2 * T)
        # forward half runs H(t), backward half runs H(-(t - T))
        s = t if t < T else -(t - T)
        return series.at(s).toarray()

    total = 0
    # split at the kink of the shifted signal so each piece is smooth
    edges = sorted({0.0, 2 * T, (T - shift) % (2 * T), (2 * T - shift) % (2 * T)})
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a < 1e-15:
            continue
        for xi, wi in zip(x, w):
            t = 0.5 * (b - a) * xi + 0.5 * (a + b)
            total = total + 0.5 * (b - a) * wi * f(t + shift) * np.exp(-1j * q * d / 2 * t)
    return total / (2 * T)


@pytest.mark.parametrize("origin, shift_periods", [("start", 0.0), ("center", 0.5)])
@pytest.mark.parametrize("q", [0, 1, 2, 3, -3, 4, 5, -6])
def test_twostep_matches_quadrature(origin, shift_periods, q):
    ser = _random_series(4)
    T = 2 * np.pi / ser.delta
    ts = twostep_series(ser, m_max=20001, q_max=10, origin=origin)
    want = _twostep_quadrature(ser, q, shift_periods * T)
    np.testing.assert_allclose(ts.get(q).toarray(), want, atol=2e-4)


def test_center_parity_and_first_order():
    ts = twostep_series(_random_series(7), m_max=199)
    assert parity_error(ts) <= 1e-12
    assert np.linalg.norm(first_order_sum(ts), 2) <= 1e-10
    with pytest.raises(ParityError):
        heff2(twostep_series(_random_series(7), origin="start"))


def test_coefficients_validate():
    with pytest.raises(AssertionError):
        twostep_coefficients(1, 2, m_max=200)
    with pytest.raises(ValueError):
        twostep_coefficients(1, 2, origin="middle")


def test_static_series_is_fixed_point():
    sec = build_sector(3, 1)
    H0 = SectorOperator(sec, sp.csr_matrix(np.diag([1.0, 2.0, 3.0]).astype(complex)))
    ser = FourierSeries(5.0, {0: H0})
    np.testing.assert_allclose(heff1(ser).H_eff, H0.toarray())
    np.testing.assert_allclose(heff2(twostep_series(ser)).H_eff, H0.toarray())


def test_symmetric_series_has_no_first_order():
    ser = _random_series(2)
    sym = FourierSeries(ser.delta, {p: ser.get(abs(p)) if p else ser.get(0)
                                    for p in ser.components})
    assert np.abs(heff1_terms(sym)[1]).max() == 0


@pytest.mark.parametrize("delta", [80.0, 160.0])
def test_heff1_against_propagator(hs6, delta):
    ser = FourierSeries(delta, hs6.components)
    T = 2 * np.pi / delta
    U = propagate(ser, T, 256).U
    rep = heff1(ser, estimate_omitted=True)
    full = heff1(ser, complete=True)
    shown = quasienergy_distance(U, rep.H_eff, T)
    assert shown <= rep.diagnostics["omitted_second_order"]
    assert quasienergy_distance(U, full.H_eff, T) < shown / 5


def test_cross_harmonic_term_hermitian(hs6):
    X = cross_harmonic_term(hs6)
    assert np.abs(X - X.conj().T).max() <= 1e-10 * np.abs(X).max()


def test_hs_comparison_small():
    rows = hs_comparison(6, [20.0, 40.0], twostep=True)
    assert rows[1]["energy_error_1"] < rows[0]["energy_error_1"]
    for r in rows:
        assert r["overlap_error_2"] < r["overlap_error_1"]
        assert r["E0"] < 0


def test_loglog_slope():
    x = np.array([1.0, 2.0, 5.0, 10.0])
    assert loglog_slope(x, 3 / x ** 2) == pytest.approx(-2.0)


# ---------------------------------------------------------------------------
# Stark shifts

def test_translation_invariant_stark_vanishes(hs6):
    N = 6
    sol = solve_sidebands_1d(hs_profile(N, np.sin(np.pi / N) ** 2))
    stk = stark_series(build_chain(N), sol.drive(), delta=1.0)
    assert stk.site_independent()
    ts = twostep_series(hs6)
    rep = stark_error2(ts, twostep_stark(stk, hs6.p_max), delta=40.0)
    assert rep.norm <= 1e-12
    assert np.abs(rep.coefficients).max() <= 1e-12


def test_sublattice_stark_nonzero():
    lat = build_square(3, 2)
    drive = chiral_flux_drive(1.0, 0.5, 0.0, 1.0, B2=1.0, q=2.0 ** 0.5)
    stk = stark_series(lat, drive)
    assert not stk.site_independent()


def test_butterfly_equal_detunings_cancel():
    sec = full_space(4)
    rng = np.random.default_rng(0)
    H0 = sum(rng.normal() * pauli_string(4, {m: "x", n: "x"}) for m in range(4) for n in range(m + 1, 4))
    Hac = butterfly_stark_hamiltonian(rng.normal(size=4), 2.0, 2.0, 5.0, sec)
    assert np.abs(nested_stark_commutator(Hac, H0)).max() <= 1e-12


def test_butterfly_unequal_detunings_formula():
    N = 4
    sec = full_space(N)
    rng = np.random.default_rng(1)
    a = rng.normal(size=N)
    J = np.triu(rng.normal(size=(N, N)), 1)
    Dg, Ds, D = 1.3, -0.4, 2.0
    P = lambda m, n, o: pauli_string(N, {m: o, n: o})
    H0 = sum(J[m, n] * P(m, n, "x") for m in range(N) for n in range(m + 1, N))
    got = nested_stark_commutator(butterfly_stark_hamiltonian(a, Dg, Ds, D, sec), H0)
    c = (Dg - Ds) ** 2 / D ** 2
    sgs = lambda n: (pauli_string(N, {n: "x"}) - 1j * pauli_string(N, {n: "y"})) / 2
    ssg = lambda n: (pauli_string(N, {n: "x"}) + 1j * pauli_string(N, {n: "y"})) / 2
    first = -sum(J[m, n] * c * ((a[m] + a[n]) ** 2 * (sgs(m) @ sgs(n) + ssg(m) @ ssg(n))
                                + (a[m] - a[n]) ** 2 * (ssg(m) @ sgs(n) + sgs(m) @ ssg(n)))
                 for m in range(N) for n in range(m + 1, N))
    np.testing.assert_allclose(got, first, atol=1e-12)
    # the expanded Pauli form carries -2 a_m a_n on YY
    second = -sum(J[m, n] * c * ((a[m] ** 2 + a[n] ** 2) * P(m, n, "x") - 2 * a[m] * a[n] * P(m, n, "y"))
                  for m in range(N) for n in range(m + 1, N))
    np.testing.assert_allclose(got, second, atol=1e-12)
    assert np.abs(got).max() > 1e-3
