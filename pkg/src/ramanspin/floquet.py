"""Floquet effective Hamiltonians, the two-step drive and Stark-shift errors.

For H(t) = sum_p H_p exp(i p delta t) the effective Hamiltonian kept here is

    H_eff,1 = H_0 + (1/delta) sum_{p>0} [H_p, H_-p]/p
              + (1/(2 delta^2)) sum_{p>0} ([[H_p, H_0], H_-p] + [[H_-p, H_0], H_p])/p^2.

The two-step drive runs H(t) for one period and its time reverse for the
next.  Expanded in exp(i q delta t / 2) about the middle of the first step,
its coefficients obey Ht_-q = (-1)^q Ht_q, which removes the first-order
term and leaves

    H_eff,2 = H_0 + (4/delta^2) sum_{q>0} (-1)^q [[Ht_q, H_0], Ht_q]/q^2.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .hamiltonian import FourierSeries, SectorOperator, build_diagonal


class ParityError(ValueError):
    """Input series is not a (centered) two-step series."""


class TruncationWarning(UserWarning):
    pass


def _dense(x):
    if isinstance(x, SectorOperator):
        x = x.matrix
    return x.toarray() if sp.issparse(x) else np.asarray(x)


def _sp(x):
    if isinstance(x, SectorOperator):
        x = x.matrix
    return sp.csr_matrix(x) if not sp.issparse(x) else x.tocsr()


def _comm_sd(S, D):
    """[S, D] for sparse S and dense D, returned dense."""
    return np.asarray(S @ D) - np.asarray((S.T @ D.T).T)


def _hermitian_part_error(M):
    s = max(np.abs(M).max(), 1e-300)
    return float(np.abs(M - M.conj().T).max() / s)


@dataclass
class EffectiveHamiltonianReport:
    H_eff: np.ndarray
    zeroth: np.ndarray
    first: np.ndarray
    second: np.ndarray
    delta: float
    p_max: int
    m_max: int | None = None
    diagnostics: dict = field(default_factory=dict)

    def operator(self, sector):
        return SectorOperator(sector, sp.csr_matrix(self.H_eff))

    def ground_state(self):
        w, v = np.linalg.eigh(self.H_eff)
        return w[0], v[:, 0]

    def to_json(self):
        w = np.linalg.eigvalsh(self.H_eff)
        return json.dumps({
            "delta": self.delta, "p_max": self.p_max, "m_max": self.m_max,
            "ground_energy": float(w[0]),
            "first_order_norm": float(np.linalg.norm(self.first, 2)),
            "second_order_norm": float(np.linalg.norm(self.second, 2)),
            "diagnostics": self.diagnostics,
        }, indent=2, default=float)


def _clamp(series, p_max):
    avail = series.p_max
    if p_max is None:
        return avail
    if p_max > avail:
        warnings.warn(f"p_max={p_max} exceeds available components ({avail}); clamped",
                      TruncationWarning, stacklevel=3)
        return avail
    return int(p_max)


def heff1_terms(series, p_max=None):
    """(H_0, C1, C2) with H_eff,1 = H_0 + C1/delta + C2/delta^2.

    C1 and C2 do not depend on delta, so a delta scan needs them once.
    """
    P = _clamp(series, p_max)
    H0 = _dense(series.get(0))
    C1 = np.zeros_like(H0, dtype=complex)
    C2 = np.zeros_like(H0, dtype=complex)
    for p in range(1, P + 1):
        Hp, Hm = _sp(series.get(p)), _sp(series.get(-p))
        if Hp.nnz == 0 and Hm.nnz == 0:
            continue
        C1 += _dense(Hp @ Hm - Hm @ Hp) / p
        A = _comm_sd(Hp, H0)      # [H_p, H_0]
        B = _comm_sd(Hm, H0)      # [H_-p, H_0]
        C2 += (-_comm_sd(Hm, A) - _comm_sd(Hp, B)) / (2.0 * p * p)
    return H0, C1, C2


def cross_harmonic_term(series, p_max=None):
    """Three-harmonic part X of the full 1/delta^2 van Vleck term.

    X = sum_{m != 0} sum_{m' != 0, m} [[H_-m', H_m'-m], H_m] / (3 m m').
    It is absent from H_eff,1 as displayed (which keeps only the terms
    with H_0), so ||X||/delta^2 sizes the error H_eff,1 makes against the
    exact stroboscopic dynamics.
    """
    P = _clamp(series, p_max)
    H = {p: _sp(series.get(p)) for p in range(-P, P + 1)}
    X = None
    for m in range(-P, P + 1):
        if m == 0 or H[m].nnz == 0:
            continue
        inner = None
        for mp in range(-P, P + 1):
            if mp in (0, m) or abs(mp - m) > P:
                continue
            A, B = H[-mp], H[mp - m]
            if A.nnz == 0 or B.nnz == 0:
                continue
            t = (A @ B - B @ A) / mp
            inner = t if inner is None else inner + t
        if inner is None:
            continue
        term = _dense(inner @ H[m] - H[m] @ inner) / (3.0 * m)
        X = term if X is None else X + term
    if X is None:
        X = np.zeros((series.sector.dim,) * 2, dtype=complex)
    return X


def heff1(series, delta=None, p_max=None, complete=False, estimate_omitted=False):
    """First-order Floquet effective Hamiltonian of ``series``.

    With ``complete=True`` the three-harmonic term of
    :func:`cross_harmonic_term` is added, giving the full van Vleck
    expansion through 1/delta^2.  With ``estimate_omitted=True`` its norm
    is reported as ``omitted_second_order`` instead.
    """
    delta = series.delta if delta is None else float(delta)
    if not delta > 0:
        raise ValueError("delta must be > 0")
    P = _clamp(series, p_max)
    H0, C1, C2 = heff1_terms(series, P)
    first, second = C1 / delta, C2 / delta ** 2
    X = cross_harmonic_term(series, P) if complete or estimate_omitted else None
    if complete:
        second = second + X / delta ** 2
    H = H0 + first + second
    diag = {"hermiticity": _hermitian_part_error(H), "complete": bool(complete)}
    if estimate_omitted and not complete:
        diag["omitted_second_order"] = float(np.linalg.norm(X, 2)) / delta ** 2
    return EffectiveHamiltonianReport(H, H0, first, second, delta, P, diagnostics=diag)


# ---------------------------------------------------------------------------
# two-step drive

def twostep_coefficients(q, P, m_max=199, origin="center"):
    """Weights c_p with Ht_q = sum_p c_p H_p for a one-step series |p| <= P."""
    if m_max % 2 == 0:
        raise AssertionError("m_max must be odd: the odd-q sum runs over odd m")
    c = {}
    if q % 2 == 0:
        h = q // 2
        if abs(h) <= P:
            c[h] = c.get(h, 0) + 0.5
            c[-h] = c.get(-h, 0) + 0.5
    else:
        for m in range(1, m_max + 1, 2):
            assert m % 2 == 1
            a, b = (q - m) // 2, (q + m) // 2
            for p, s in ((a, 1.0), (-a, -1.0), (b, -1.0), (-b, 1.0)):
                if abs(p) <= P:
                    c[p] = c.get(p, 0) + s / m
        c = {p: v / (np.pi * 1j) for p, v in c.items()}
    if origin == "center":
        ph = 1j ** (q % 4)
        c = {p: v * ph for p, v in c.items()}
    elif origin != "start":
        raise ValueError("origin must be 'center' or 'start'")
    return {p: v for p, v in c.items() if v != 0}


def _combine(weights, getter, zero):
    out = zero
    for p, w in sorted(weights.items()):
        out = out + w * getter(p)
    return out


def twostep_series(series, p_max=None, m_max=199, q_max=None, origin="center"):
    """Fourier series (base frequency delta/2) of the two-step drive.

    Parameters
    ----------
    p_max : int, optional
        Largest one-step component used; defaults to all available.
    m_max : int
        Odd-term truncation of the infinite sum (>= 9).
    q_max : int, optional
        Largest two-step index kept; defaults to 4 p_max + 1.
    origin : {"center", "start"}
        Time origin of the expansion.  Only "center" gives
        Ht_-q = (-1)^q Ht_q.
    """
    if m_max < 9:
        raise ValueError("m_max must be >= 9")
    P = _clamp(series, p_max)
    Q = 4 * P + 1 if q_max is None else int(q_max)
    sector = series.sector
    zero = sp.csr_matrix((sector.dim, sector.dim), dtype=complex)
    comps = {}
    norms = {}
    for q in range(-Q, Q + 1):
        w = twostep_coefficients(q, P, m_max, origin)
        if not w:
            continue
        M = _combine(w, lambda p: series.get(p).matrix, zero)
        M.eliminate_zeros()
        if q == 0 or M.nnz:
            comps[q] = SectorOperator(sector, M)
            norms[q] = float(abs(M).max()) if M.nnz else 0.0
    # odd-m terms that would be needed but lie beyond m_max
    truncated = m_max < Q + 2 * P
    last = max((q for q in norms if q % 2), default=None)
    tail = norms[last] * last / 2.0 if last else 0.0
    meta = {"p_max": P, "m_max": m_max, "q_max": Q, "origin": origin,
            "m_truncated": truncated, "tail_estimate": tail}
    return FourierSeries(series.delta / 2.0, comps, meta)


def twostep_stark(stark, P=None, m_max=199, q_max=None, origin="center"):
    """Two-step transform of per-site Stark amplitudes {p: A_p^n}."""
    comps = stark.components if hasattr(stark, "components") else stark
    if any(not isinstance(p, (int, np.integer)) for p in comps):
        raise ValueError("Stark series must be keyed by integer p")
    if P is None:
        P = max((abs(p) for p in comps), default=0)
    Q = 4 * P + 1 if q_max is None else int(q_max)
    n = len(next(iter(comps.values()))) if comps else 0
    out = {}
    for q in range(-Q, Q + 1):
        if q == 0:
            continue
        w = twostep_coefficients(q, P, m_max, origin)
        a = _combine(w, lambda p: comps.get(p, np.zeros(n, dtype=complex)), np.zeros(n, dtype=complex))
        if np.any(a != 0):
            out[q] = a
    return out


def parity_error(twostep):
    """max_q |Ht_q - (-1)^q Ht_-q| (entrywise)."""
    err = 0.0
    for q, op in twostep.components.items():
        d = op.matrix - (-1) ** (q % 2) * twostep.get(-q).matrix
        if d.nnz:
            err = max(err, float(abs(d).max()))
    return err


def first_order_sum(series):
    """sum_{q>0} [H_q, H_-q]/q as a dense matrix."""
    out = None
    for q in range(1, series.p_max + 1):
        A, B = _sp(series.get(q)), _sp(series.get(-q))
        t = _dense(A @ B - B @ A) / q
        out = t if out is None else out + t
    if out is None:
        out = np.zeros((series.sector.dim,) * 2, dtype=complex)
    return out


def _check_parity(twostep, parity_tol):
    scale = max((float(abs(op.matrix).max()) for op in twostep.components.values() if op.matrix.nnz),
                default=1.0)
    perr = parity_error(twostep)
    if perr > parity_tol * scale:
        raise ParityError(f"parity violated by {perr:.3e}: not a centered two-step series")
    return perr


def heff2_terms(twostep, p_max=None):
    """(H_0, S, last) with H_eff,2 = H_0 + (4/delta^2) S.

    ``last`` is the size of the final q term (times q), used for the tail
    estimate.
    """
    Q = _clamp(twostep, p_max)
    H0 = _dense(twostep.get(0))
    S = np.zeros_like(H0, dtype=complex)
    last = 0.0
    for q in range(1, Q + 1):
        Hq = _sp(twostep.get(q))
        if Hq.nnz == 0:
            continue
        # (-1)^q [[Ht_q, H_0], Ht_q] = -(-1)^q [Ht_q, [Ht_q, H_0]]
        term = (-1) ** q * -_comm_sd(Hq, _comm_sd(Hq, H0)) / q ** 2
        S += term
        last = float(np.abs(term).max()) * q
    return H0, S, last


def heff2(twostep, delta=None, p_max=None, parity_tol=1e-10):
    """Second-order effective Hamiltonian of a centered two-step series.

    ``delta`` is the one-step gradient frequency; the two-step series
    itself has base frequency delta/2.
    """
    delta = 2.0 * twostep.delta if delta is None else float(delta)
    perr = _check_parity(twostep, parity_tol)
    F1 = first_order_sum(twostep)
    f1 = float(np.linalg.norm(F1, 2)) if F1.size else 0.0
    Q = _clamp(twostep, p_max)
    H0, S, last = heff2_terms(twostep, Q)
    second = 4.0 / delta ** 2 * S
    H = H0 + second
    diag = {"parity_error": perr, "first_order_norm": f1,
            "hermiticity": _hermitian_part_error(H),
            "tail_estimate": 4.0 / delta ** 2 * last / 10.0}
    diag.update({k: v for k, v in twostep.meta.items() if k in ("m_max", "q_max", "m_truncated")})
    return EffectiveHamiltonianReport(H, H0, np.zeros_like(H0), second, delta, Q,
                                      twostep.meta.get("m_max"), diag)


# ---------------------------------------------------------------------------
# Haldane-Shastry comparison pipeline

def _ground(H):
    w, v = np.linalg.eigh(H)
    return float(w[0]), v[:, 0]


def hs_comparison(N, deltas, twostep=False, p_max=None, m_max=199, J1=1.0, solver_kw=None):
    """Ground-state energies and overlaps of H_0, H_eff,1 (and H_eff,2) for the HS chain.

    The chain is driven by the minimum-intensity sideband solution for
    J_n = J_0 / sin^2(n pi / N) with J_0 chosen so that J_1 = ``J1``, in the
    half-filled sector.  ``deltas`` are gradient frequencies in units of J1.
    Returns one dict per delta.
    """
    from .drive import solve_sidebands_1d
    from .hamiltonian import build_sector, hs_fourier, hs_profile

    sol = solve_sidebands_1d(hs_profile(N, J1 * np.sin(np.pi / N) ** 2), **(solver_kw or {}))
    ser = hs_fourier(N, sol.drive(), 1.0, build_sector(N, N // 2))
    H0, C1, C2 = heff1_terms(ser, p_max)
    E0, psi0 = _ground(H0)
    S = None
    if twostep:
        ts = twostep_series(ser, p_max, m_max)
        _check_parity(ts, 1e-10)
        _, S, _ = heff2_terms(ts)
    rows = []
    for d in np.atleast_1d(deltas):
        delta = float(d) * J1
        E1, psi1 = _ground(H0 + C1 / delta + C2 / delta ** 2)
        row = {"delta_over_J1": float(d), "E0": E0, "E1": E1,
               "energy_error_1": abs((E0 - E1) / E0),
               "overlap_error_1": float(1.0 - abs(np.vdot(psi0, psi1)))}
        if S is not None:
            E2, psi2 = _ground(H0 + 4.0 / delta ** 2 * S)
            row.update({"E2": E2, "energy_error_2": abs((E0 - E2) / E0),
                        "overlap_error_2": float(1.0 - abs(np.vdot(psi0, psi2)))})
        rows.append(row)
    return rows


def loglog_slope(x, y):
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float)), 1)[0])


# ---------------------------------------------------------------------------
# Stark-shift errors

@dataclass
class StarkErrorReport:
    operator: np.ndarray        # full change of H_err,2 caused by the Stark terms
    aa_part: np.ndarray         # [[A, H0], A] contribution only
    cross_part: np.ndarray      # [[A, H0], Ht] + [[Ht, H0], A]
    coefficients: np.ndarray    # At_{m,n}
    J_prime: np.ndarray | None

    @property
    def norm(self):
        return float(np.linalg.norm(self.operator, 2)) if self.operator.size else 0.0


def _comm_diag(a, M):
    """[diag(a), M] for dense M."""
    return a[:, None] * M - M * a[None, :]


def stark_coefficients(stark_twostep, delta):
    """At_{m,n} = sum_q 4 (-1)^(q+1) (At_q^m - At_q^n)^2 / (delta^2 q^2), q > 0."""
    out = None
    for q, a in stark_twostep.items():
        if q <= 0:
            continue
        a = np.asarray(a)
        t = 4.0 * (-1) ** (q + 1) * (a[:, None] - a[None, :]) ** 2 / (delta ** 2 * q ** 2)
        out = t if out is None else out + t
    return out


def stark_error2(twostep, stark_twostep, H0=None, delta=None, J=None):
    """Change in the second-order error caused by time-dependent Stark shifts.

    Returns the nested-commutator difference between including and omitting
    Ht_ac,q = sum_n At_q^n sigma_ss^n, split into the pure Stark part and the
    cross terms, plus the coupling rescaling At_{m,n} and J' = (1 + At) J.
    """
    delta = 2.0 * twostep.delta if delta is None else float(delta)
    sector = twostep.sector
    H0 = _dense(twostep.get(0) if H0 is None else H0)
    bits = sector.bits().astype(float)
    aa = np.zeros_like(H0, dtype=complex)
    cross = np.zeros_like(H0, dtype=complex)
    for q, a_site in sorted(stark_twostep.items()):
        if q <= 0:
            continue
        a = bits @ np.asarray(a_site)
        Hq = _dense(twostep.get(q))
        AH = _comm_diag(a, H0)
        w = 4.0 / delta ** 2 * (-1) ** q / q ** 2
        aa += w * -_comm_diag(a, AH)
        cross += w * ((AH @ Hq - Hq @ AH) + _comm_diag(-a, Hq @ H0 - H0 @ Hq))
    coef = stark_coefficients(stark_twostep, delta)
    if coef is None:
        coef = np.zeros((sector.N, sector.N))
    Jp = None if J is None else (1.0 + coef) * np.asarray(J)
    return StarkErrorReport(aa + cross, aa, cross, coef, Jp)


def butterfly_stark_hamiltonian(a, Delta_g, Delta_s, Delta, sector):
    """sum_n (a_n/Delta)(Delta_g sigma_gg^n + Delta_s sigma_ss^n) on ``sector``."""
    a = np.asarray(a)
    bits = sector.bits().astype(float)
    diag = (Delta_g * ((1 - bits) @ a) + Delta_s * (bits @ a)) / Delta
    return SectorOperator(sector, sp.diags(np.asarray(diag, dtype=complex), format="csr"))


def nested_stark_commutator(Hac, H0):
    """[[H_ac, H_0], H_ac] for diagonal H_ac."""
    a = np.asarray(_sp(Hac).diagonal())
    H0 = _dense(H0)
    return -_comm_diag(a, _comm_diag(a, H0))


def stark_operator(a, sector):
    """Diagonal sum_n a_n sigma_ss^n."""
    return build_diagonal(a, sector)
