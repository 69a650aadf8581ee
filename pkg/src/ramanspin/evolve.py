"""Time evolution: driven propagators, Trotterized XXZ and error bounds."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal

from .hamiltonian import FourierSeries, SectorOperator

DENSE_LIMIT = 4096


class PropagationError(RuntimeError):
    def __init__(self, message, coarse=None, fine=None):
        super().__init__(message)
        self.coarse = coarse
        self.fine = fine


def _dense(x):
    if isinstance(x, SectorOperator):
        x = x.matrix
    return x.toarray() if sp.issparse(x) else np.asarray(x)


def expm_hermitian(H, t):
    """exp(-i H t) for Hermitian dense H via eigendecomposition."""
    H = _dense(H)
    w, v = np.linalg.eigh(0.5 * (H + H.conj().T))
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def expm_krylov(H, psi, t, m=40, tol=1e-12):
    """exp(-i H t) psi by Lanczos on a Krylov space of size <= m.

    Splits t into substeps until the Lanczos error estimate drops below tol.
    """
    H = H.matrix if isinstance(H, SectorOperator) else H
    psi = np.asarray(psi, dtype=complex)
    nrm0 = np.linalg.norm(psi)
    if nrm0 == 0 or t == 0:
        return psi.copy()
    out = psi / nrm0
    remaining = float(t)
    dt = remaining
    while remaining > 0:
        dt = min(dt, remaining)
        V = np.zeros((m + 1, len(out)), dtype=complex)
        a = np.zeros(m)
        b = np.zeros(m)
        V[0] = out
        k = m
        for j in range(m):
            w = H @ V[j]
            a[j] = np.vdot(V[j], w).real
            w = w - a[j] * V[j] - (b[j - 1] * V[j - 1] if j else 0)
            # full reorthogonalization keeps the small basis clean
            w = w - V[: j + 1].T @ (V[: j + 1].conj() @ w)
            b[j] = np.linalg.norm(w)
            if b[j] < 1e-14:
                k = j + 1
                break
            V[j + 1] = w / b[j]
        ev, U = eigh_tridiagonal(a[:k], b[: k - 1])
        coef = U @ (np.exp(-1j * ev * dt) * U[0].conj())
        err = abs(b[k - 1] * coef[k - 1]) if k == m else 0.0
        if err > tol and dt > 1e-12 * abs(t):
            dt /= 2
            continue
        out = V[:k].T @ coef
        out /= np.linalg.norm(out)
        remaining -= dt
    return out * nrm0


# ---------------------------------------------------------------------------
# driven propagation

@dataclass
class PropagationResult:
    U: np.ndarray
    richardson_error: float
    steps: int
    method: str

    def unitarity_error(self):
        U = self.U
        if U.ndim == 1:
            return abs(np.linalg.norm(U) - 1.0)
        return float(np.abs(U.conj().T @ U - np.eye(U.shape[0])).max())


def _steps(series, t_final, substeps):
    T = 2 * np.pi / series.delta
    return max(1, int(np.ceil(round(abs(t_final) / T * substeps, 9))))


def _hmat(series):
    return {p: op.matrix for p, op in series.components.items()}


def _h_at(mats, delta, t, dense):
    M = sum(m * np.exp(1j * p * delta * t) for p, m in mats.items())
    return M.toarray() if dense else M.tocsr()


def _cfm4_generators(mats, delta, t, dt, dense):
    # commutator-free 4th-order Magnus: two exponentials of Gauss-point combinations
    s3 = np.sqrt(3.0)
    c1, c2 = 0.5 - s3 / 6, 0.5 + s3 / 6
    a1, a2 = 0.25 + s3 / 6, 0.25 - s3 / 6
    H1 = _h_at(mats, delta, t + c1 * dt, dense)
    H2 = _h_at(mats, delta, t + c2 * dt, dense)
    # applied in list order: the first exponential leans on the earlier Gauss point
    return [a1 * H1 + a2 * H2, a2 * H1 + a1 * H2]


def _evolve(series, t_final, n, method, psi):
    mats = _hmat(series)
    dim = series.sector.dim
    dense = dim <= DENSE_LIMIT
    dt = t_final / n
    U = np.eye(dim, dtype=complex) if psi is None else np.asarray(psi, dtype=complex).copy()
    for k in range(n):
        t = k * dt
        if method == "midpoint":
            gens = [_h_at(mats, series.delta, t + 0.5 * dt, dense)]
        elif method == "cfm4":
            gens = _cfm4_generators(mats, series.delta, t, dt, dense)
        else:
            raise ValueError(f"unknown method {method!r}")
        for G in gens:
            if dense:
                U = expm_hermitian(G, dt) @ U
            else:
                if U.ndim != 1:
                    raise ValueError("large sectors need an initial state")
                U = expm_krylov(sp.csr_matrix(G), U, dt)
    return U


def propagate(series, t_final, substeps_per_period=64, method="midpoint", psi=None,
              rtol=None):
    """Time-ordered propagator of H(t) = sum_p H_p exp(i p delta t) from 0 to t_final.

    Uses ``substeps_per_period`` steps per period T = 2 pi / delta and a
    second run with half the step for a Richardson error estimate
    (|U_n - U_2n| / (2^order - 1)).  If ``psi`` is given the state is
    propagated instead of the full unitary.  With ``rtol`` set, an estimate
    above it raises PropagationError carrying both results.
    """
    if substeps_per_period < 16:
        raise ValueError("substeps_per_period must be >= 16")
    if t_final == 0:
        dim = series.sector.dim
        U = np.eye(dim, dtype=complex) if psi is None else np.asarray(psi, dtype=complex)
        return PropagationResult(U, 0.0, 0, method)
    n = _steps(series, t_final, substeps_per_period)
    Ua = _evolve(series, t_final, n, method, psi)
    Ub = _evolve(series, t_final, 2 * n, method, psi)
    order = 2 if method == "midpoint" else 4
    est = float(np.abs(Ua - Ub).max()) / (2 ** order - 1)
    if rtol is not None and est > rtol:
        raise PropagationError(f"step refinement changed the result by {est:.3e}", Ua, Ub)
    return PropagationResult(Ub, est, 2 * n, method)


def time_reversed(series):
    """Series of H(-t): components H_p moved to index -p."""
    return FourierSeries(series.delta, {-p: op for p, op in series.components.items()},
                         dict(series.meta))


def propagate_twostep(series, n_periods=1, substeps_per_period=64, method="midpoint",
                      psi=None, rtol=None):
    """Propagator of the explicit two-step drive over ``n_periods`` periods of 2T.

    Each period runs H(t) for T = 2 pi / delta and then H(-t) for T; the
    discontinuous signal is integrated piecewise, never through its slowly
    converging Fourier series.
    """
    T = 2 * np.pi / series.delta
    rev = time_reversed(series)
    state = psi
    est = 0.0
    steps = 0
    U = None
    for _ in range(int(n_periods)):
        for s in (series, rev):
            r = propagate(s, T, substeps_per_period, method, psi=state, rtol=rtol)
            est += r.richardson_error
            steps += r.steps
            if psi is None:
                U = r.U if U is None else r.U @ U
            else:
                state = r.U
    if psi is not None:
        U = state
    return PropagationResult(U, est, steps, method)


def quasienergies(U, period):
    """Quasi-energies -arg(eig U)/period, sorted, in (-pi/period, pi/period]."""
    ev = np.linalg.eigvals(U)
    return np.sort(-np.angle(ev) / period)


def fold(E, period):
    """Map energies into the quasi-energy zone (-pi/period, pi/period]."""
    w = 2 * np.pi / period
    return np.sort(-np.angle(np.exp(-1j * np.asarray(E) * period)) / period)


def quasienergy_distance(U, H, period):
    """Max distance between the quasi-energy spectra of U and exp(-i H period)."""
    a = quasienergies(U, period)
    b = fold(np.linalg.eigvalsh(_dense(H)), period)
    w = 2 * np.pi / period
    # spectra are sets on a circle; compare after aligning by sorting
    d = np.abs(a - b)
    return float(np.max(np.minimum(d, w - d)))


# ---------------------------------------------------------------------------
# Trotterized XXZ

def rotation_segment(generator, rotation):
    """Generator seen in the rotated frame: R G R^dagger."""
    R = _dense(rotation)
    return R @ _dense(generator) @ R.conj().T


def trotter_product(segments, t, N_t):
    """(prod_j exp(-i A_j t/N_t))^N_t, first segment applied first.

    ``segments`` entries are dense generators or (generator, rotation)
    pairs, the latter applied as R exp(-i G dt) R^dagger.
    """
    if N_t < 1:
        raise ValueError("N_t must be >= 1")
    dt = t / N_t
    step = None
    for seg in segments:
        if isinstance(seg, tuple):
            G, R = seg
            R = _dense(R)
            E = R @ expm_hermitian(G, dt) @ R.conj().T
        else:
            E = expm_hermitian(seg, dt)
        step = E if step is None else E @ step
    return np.linalg.matrix_power(step, N_t)


def trotter_xxz(Hxy, Hzz, t, N_t, rotation=None):
    """Stroboscopic {H_XY, H_ZZ, H_XY, H_ZZ, ...} evolution for time t.

    ``Hzz`` is the ZZ generator itself, or, with ``rotation`` R given, the
    operator G whose rotated-frame evolution R exp(-i G dt) R^dagger
    supplies the ZZ segment.  ``rotation`` may also be a list of R, with
    ``Hzz`` then applied once per rotation.
    """
    if rotation is None:
        segs = [_dense(Hxy), _dense(Hzz)]
    elif isinstance(rotation, (list, tuple)):
        segs = [_dense(Hxy)] + [(_dense(Hzz), R) for R in rotation]
    else:
        segs = [_dense(Hxy), (_dense(Hzz), rotation)]
    return trotter_product(segs, t, N_t)


@dataclass
class TrotterBound:
    exact: float
    estimate: float | None
    R: float | None


def commutator_norm(A, B):
    A, B = _dense(A), _dense(B)
    return float(np.linalg.norm(A @ B - B @ A, 2))


def range_factor(J):
    """R = max_m sum_{n>m} |J[m, n]| / max|J|; equals 1 for nearest neighbours."""
    J = np.abs(np.asarray(J))
    top = J.max()
    if top == 0:
        return 0.0
    return float(np.max(np.triu(J, 1).sum(axis=1)) / top)


def trotter_bound(Hxy, Hzz, t, N_t, J=None):
    """Commutator bound ||[H_XY, H_ZZ]|| t^2 / (2 N_t) and the N (R J t)^2 / N_t estimate.

    ``Hzz`` may be a list of generators (already rotated), in which case the
    pairwise sum over all segments is used, which is the first-order
    product-formula bound for more than two pieces.
    """
    if N_t < 1:
        raise ValueError("N_t must be >= 1")
    segs = [Hxy] + (list(Hzz) if isinstance(Hzz, (list, tuple)) else [Hzz])
    c = 0.0
    for i in range(len(segs)):
        for j in range(i + 1, len(segs)):
            c += commutator_norm(segs[i], segs[j])
    exact = c * t ** 2 / (2 * N_t)
    if J is None:
        return TrotterBound(exact, None, None)
    J = np.asarray(J)
    R = range_factor(J)
    est = J.shape[0] * (R * np.abs(J).max() * t) ** 2 / N_t
    return TrotterBound(exact, est, R)


def write_trace(path, rows):
    """CSV with columns t, error, bound."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "error", "bound"])
        for t, e, b in rows:
            wr.writerow([f"{t:.12e}", f"{e:.12e}", f"{b:.12e}"])
