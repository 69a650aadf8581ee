"""Sector-restricted spin-1/2 operators.

Basis states are N-bit integers; bit n set means site n is in |s>
(an excitation), with sigma_z |s> = +|s>.  sigma_gs^m sigma_sg^n moves an
excitation from m to n, so <b| H_XY |a> = J[m, n] for that hop.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np
import scipy.sparse as sp

from .drive import CouplingKernel, coupling_matrix
from .lattice import build_chain


class HermiticityError(ValueError):
    pass


# ---------------------------------------------------------------------------
# basis

@dataclass(frozen=True, eq=False)
class BasisSector:
    """Ordered occupation patterns with a fixed (or a set of) excitation number(s)."""

    N: int
    n_exc: tuple
    states: np.ndarray

    @property
    def dim(self):
        return len(self.states)

    def index(self, patterns):
        """Positions of ``patterns``; -1 where a pattern is outside the sector."""
        patterns = np.asarray(patterns, dtype=np.int64)
        i = np.searchsorted(self.states, patterns)
        i = np.clip(i, 0, self.dim - 1)
        return np.where(self.states[i] == patterns, i, -1)

    def bits(self):
        """(dim, N) array of occupations."""
        return ((self.states[:, None] >> np.arange(self.N)) & 1).astype(np.int8)

    def popcount(self):
        return self.bits().sum(axis=1)

    def __repr__(self):
        return f"BasisSector(N={self.N}, n_exc={self.n_exc}, dim={self.dim})"


def _patterns(N, n):
    out = np.zeros(comb(N, n), dtype=np.int64)
    for i, c in enumerate(combinations(range(N), n)):
        v = 0
        for b in c:
            v |= 1 << b
        out[i] = v
    return out


def build_sector(N, n_exc):
    """Sector with ``n_exc`` excitations (int) or the union over an iterable."""
    if N < 1 or N > 62:
        raise ValueError("N must be in 1..62")
    ns = (n_exc,) if np.isscalar(n_exc) else tuple(sorted(set(int(n) for n in n_exc)))
    for n in ns:
        if not 0 <= n <= N:
            raise ValueError(f"n_exc={n} out of range for N={N}")
    states = np.sort(np.concatenate([_patterns(N, int(n)) for n in ns]))
    return BasisSector(int(N), tuple(int(n) for n in ns), states)


def full_space(N):
    return build_sector(N, range(N + 1))


# ---------------------------------------------------------------------------
# operators

@dataclass(eq=False)
class SectorOperator:
    """Sparse operator on a BasisSector."""

    sector: BasisSector
    matrix: sp.csr_matrix

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix, dtype=complex)
        if self.matrix.shape != (self.sector.dim, self.sector.dim):
            raise ValueError("operator shape does not match its sector")

    @property
    def dim(self):
        return self.sector.dim

    def toarray(self):
        return self.matrix.toarray()

    def dag(self):
        return SectorOperator(self.sector, self.matrix.conj().T.tocsr())

    def hermiticity_error(self):
        d = abs(self.matrix - self.matrix.conj().T)
        scale = max(abs(self.matrix).max(), 1e-300) if self.matrix.nnz else 1.0
        return float(d.max() / scale) if d.nnz else 0.0

    def is_hermitian(self, tol=1e-12):
        return self.hermiticity_error() <= tol

    def __add__(self, other):
        return SectorOperator(self.sector, self.matrix + _mat(other))

    def __sub__(self, other):
        return SectorOperator(self.sector, self.matrix - _mat(other))

    def __mul__(self, c):
        return SectorOperator(self.sector, self.matrix * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def to_coo_csv(self, path):
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["row", "col", "re", "im"])
            for i in order:
                v = coo.data[i]
                wr.writerow([coo.row[i], coo.col[i], f"{v.real:.12e}", f"{v.imag:.12e}"])


def _mat(x):
    return x.matrix if isinstance(x, SectorOperator) else x


def _check_hermitian_matrix(J, tol=1e-12):
    J = np.asarray(J)
    scale = max(np.abs(J).max(), 1e-300)
    if np.abs(J - J.conj().T).max() > tol * scale:
        raise HermiticityError("coupling matrix must satisfy J[n, m] = conj(J[m, n])")


def build_xy(J, sector, check=True):
    """H = sum_{m != n} J[m, n] sigma_gs^m sigma_sg^n on ``sector``."""
    J = np.asarray(J, dtype=complex)
    N = sector.N
    if J.shape != (N, N):
        raise ValueError("J shape does not match sector size")
    if check:
        _check_hermitian_matrix(J)
    s = sector.states
    rows, cols, vals = [], [], []
    for m in range(N):
        bm = np.int64(1) << m
        has_m = (s & bm) != 0
        for n in range(N):
            if m == n or J[m, n] == 0:
                continue
            bn = np.int64(1) << n
            src = np.nonzero(has_m & ((s & bn) == 0))[0]
            if not len(src):
                continue
            tgt = sector.index(s[src] ^ bm ^ bn)
            rows.append(tgt)
            cols.append(src)
            vals.append(np.full(len(src), J[m, n]))
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    M = sp.coo_matrix((vals, (rows, cols)), shape=(sector.dim, sector.dim)).tocsr()
    M.sum_duplicates()
    return SectorOperator(sector, M)


def _zvals(sector):
    return 2.0 * sector.bits() - 1.0


def build_zz(Jz, sector):
    """sum_{m<n} Jz[m, n] sigma_z^m sigma_z^n (diagonal)."""
    Jz = np.asarray(Jz, dtype=float)
    if Jz.shape != (sector.N, sector.N):
        raise ValueError("Jz shape does not match sector size")
    if np.abs(Jz - Jz.T).max() > 1e-12 * max(np.abs(Jz).max(), 1e-300):
        raise ValueError("Jz must be symmetric")
    Jz = np.triu(Jz, 1)
    z = _zvals(sector)
    e = np.einsum("im,mn,in->i", z, Jz, z)
    return SectorOperator(sector, sp.diags(e.astype(complex), format="csr"))


def build_field(B, sector):
    """-B sum_n sigma_z^n = -B (2 n_exc - N) per basis state."""
    e = -B * (2.0 * sector.popcount() - sector.N)
    return SectorOperator(sector, sp.diags(e.astype(complex), format="csr"))


def build_diagonal(a, sector):
    """sum_n a_n sigma_ss^n, e.g. a Stark-shift Fourier component."""
    a = np.asarray(a)
    e = sector.bits() @ a
    return SectorOperator(sector, sp.diags(np.asarray(e, dtype=complex), format="csr"))


def build_xxz(Jxy, Jz, B, sector):
    """XY hopping ``Jxy`` plus ZZ term ``Jz`` plus field ``B``."""
    return build_xy(Jxy, sector) + build_zz(Jz, sector) + build_field(B, sector)


def spin_xxz(Jxy_spin, Jz, B, sector):
    """sum_{m<n} [Jz sz sz + Jxy (sx sx + sy sy)] - B sum sz.

    sx sx + sy sy = 2 (s+ s- + s- s+), so the hopping matrix is 2 Jxy.
    """
    return build_xxz(2.0 * np.asarray(Jxy_spin, dtype=complex), Jz, B, sector)


def build_butterfly_xxyy(J, phi, sector):
    """sum_{m<n} [J (s_gs^m + e^{i phi} s_sg^m)(s_sg^n + e^{-i phi} s_gs^n) + h.c.].

    Does not conserve the excitation number, so ``sector`` must be closed
    under changes by 2 (e.g. the full space or a parity union).
    """
    J = np.asarray(J, dtype=complex)
    N = sector.N
    s = sector.states
    e = np.exp(1j * phi)
    rows, cols, vals = [], [], []

    def add(m, n, need_m, need_n, c):
        # need_x = 1: site must be excited (lowered); 0: empty (raised)
        bm, bn = np.int64(1) << m, np.int64(1) << n
        ok = (((s & bm) != 0) == bool(need_m)) & (((s & bn) != 0) == bool(need_n))
        src = np.nonzero(ok)[0]
        if not len(src):
            return
        tgt = sector.index(s[src] ^ bm ^ bn)
        if np.any(tgt < 0):
            raise ValueError("sector is not closed under the butterfly coupling")
        rows.append(tgt)
        cols.append(src)
        vals.append(np.full(len(src), c))

    for m in range(N):
        for n in range(m + 1, N):
            j = J[m, n]
            if j == 0:
                continue
            for c, nm, nn in ((j, 1, 0), (j * np.conj(e), 1, 1), (j * e, 0, 0), (j, 0, 1)):
                # term, then its hermitian conjugate (flip both actions)
                add(m, n, nm, nn, c)
                add(m, n, 1 - nm, 1 - nn, np.conj(c))
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    M = sp.coo_matrix((vals, (rows, cols)), shape=(sector.dim, sector.dim)).tocsr()
    M.sum_duplicates()
    return SectorOperator(sector, M)


# ---------------------------------------------------------------------------
# named models

def hs_profile(N, J0=1.0):
    """J_n = J0 / sin^2(n pi / N) for n = 1..N-1."""
    if N < 2:
        raise ValueError("N must be >= 2")
    n = np.arange(1, N)
    return J0 / np.sin(n * np.pi / N) ** 2


def hs_target(N, J0=1.0):
    """Haldane-Shastry coupling matrix on N sites."""
    prof = np.concatenate([[0.0], hs_profile(N, J0)])
    i = np.arange(N)
    return prof[np.abs(i[:, None] - i[None, :])].astype(complex)


def xxz_eta_target(lattice, J=1.0, eta=3, theta=0.0):
    """Spin-model coefficients J sin(theta)/r^eta (XY) and J cos(theta)/r^eta (ZZ).

    ``eta="NN"`` keeps only unit separations.
    """
    r = lattice.distances()
    off = ~np.eye(lattice.N, dtype=bool)
    if isinstance(eta, str):
        if eta.upper() != "NN":
            raise ValueError(f"unknown eta {eta!r}")
        w = np.where(off & np.isclose(r, 1.0), 1.0, 0.0)
    else:
        if not eta > 0:
            raise ValueError("eta must be positive")
        w = np.zeros_like(r)
        w[off] = 1.0 / r[off] ** eta
    return J * np.sin(theta) * w, J * np.cos(theta) * w


# ---------------------------------------------------------------------------
# Fourier series of the driven Hamiltonian

@dataclass(eq=False)
class FourierSeries:
    """H(t) = sum_p H_p exp(i p delta t)."""

    delta: float
    components: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if 0 not in self.components:
            raise ValueError("p = 0 component is required")
        self.components = dict(sorted(self.components.items()))

    @property
    def sector(self):
        return self.components[0].sector

    @property
    def p_max(self):
        return max(abs(p) for p in self.components)

    def get(self, p):
        if p in self.components:
            return self.components[p]
        return SectorOperator(self.sector, sp.csr_matrix((self.sector.dim, self.sector.dim)))

    def at(self, t):
        M = sum(op.matrix * np.exp(1j * p * self.delta * t) for p, op in self.components.items())
        return SectorOperator(self.sector, M)

    def hermiticity_error(self):
        err = 0.0
        for p, op in self.components.items():
            d = op.matrix - self.get(-p).matrix.conj().T
            if d.nnz:
                err = max(err, float(abs(d).max()))
        return err


def _integer_ratio(x, delta, what):
    k = np.rint(np.asarray(x) / delta)
    if np.abs(np.asarray(x) - k * delta).max(initial=0.0) > 1e-9 * abs(delta):
        raise ValueError(f"{what} are not integer multiples of delta")
    return k.astype(int)


def fourier_coupling_matrices(lattice, drive, kernel=None, delta=None):
    """Coupling matrices J^(p) with H_p = sum J^(p)[m, n] s_gs^m s_sg^n.

    The pair (alpha at n, beta at m) oscillates as
    exp(i (w_m - w_n + w_alpha - w_beta) t), i.e. at p delta with
    p = (w_m - w_n)/delta + (w_alpha - w_beta)/delta.
    """
    kernel = CouplingKernel() if kernel is None else kernel
    delta = lattice.unit if delta is None else delta
    w = _integer_ratio(lattice.shifts, delta, "lattice shifts")
    d = _integer_ratio(drive.detunings, delta, "sideband detunings")
    N = lattice.N
    X = drive.amplitudes(lattice.positions)
    K = kernel(lattice.distances())
    np.fill_diagonal(K, 0.0)
    out = {}
    W = w[:, None] - w[None, :]
    for a in range(len(d)):
        for b in range(len(d)):
            P = W + d[a] - d[b]
            amp = np.conj(X[b])[:, None] * X[a][None, :] * K
            for p in np.unique(P):
                mask = (P == p)
                np.fill_diagonal(mask, False)
                if not mask.any():
                    continue
                out.setdefault(int(p), np.zeros((N, N), dtype=complex))
                out[int(p)][mask] += amp[mask]
    out.setdefault(0, np.zeros((N, N), dtype=complex))
    return dict(sorted(out.items()))


def fourier_from_drive(lattice, drive, kernel=None, sector=None, delta=None):
    """FourierSeries of the driven XY Hamiltonian on a commensurate 1D lattice."""
    delta = lattice.unit if delta is None else delta
    if sector is None:
        sector = build_sector(lattice.N, lattice.N // 2)
    mats = fourier_coupling_matrices(lattice, drive, kernel, delta)
    comps = {p: build_xy(Jp, sector, check=(p == 0)) for p, Jp in mats.items()
             if p == 0 or np.any(Jp != 0)}
    return FourierSeries(float(delta), comps)


def instantaneous_xy(lattice, drive, t, kernel=None, sector=None):
    """H_XY(t) assembled directly from the pair phases, without a Fourier split."""
    kernel = CouplingKernel() if kernel is None else kernel
    if sector is None:
        sector = build_sector(lattice.N, lattice.N // 2)
    X = drive.amplitudes(lattice.positions)
    w = lattice.shifts
    det = drive.detunings
    K = kernel(lattice.distances())
    np.fill_diagonal(K, 0.0)
    J = np.zeros((lattice.N, lattice.N), dtype=complex)
    for a in range(len(det)):
        for b in range(len(det)):
            ph = np.exp(1j * (w[:, None] - w[None, :] + det[a] - det[b]) * t)
            J += np.conj(X[b])[:, None] * X[a][None, :] * K * ph
    np.fill_diagonal(J, 0.0)
    return build_xy(J, sector, check=False)


def hs_fourier(N, drive, delta=1.0, sector=None):
    """Fourier series of the HS chain driven by ``drive`` (detunings alpha * delta)."""
    return fourier_from_drive(build_chain(N, delta), drive, CouplingKernel(), sector, delta)


# ---------------------------------------------------------------------------
# single-spin helpers (full 2^N space, used by rotations and checks)

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _local_index_map(N):
    """For the full space ordered by integer pattern, bit n of each state."""
    s = np.arange(1 << N)
    return (s[:, None] >> np.arange(N)) & 1


def pauli_string(N, ops):
    """Dense full-space operator for {site: 'x'|'y'|'z'} in the integer basis.

    Local basis per site: bit = 1 is |s> (sigma_z = +1), bit = 0 is |g>.
    """
    M = np.array([[1.0 + 0j]])
    # kron from the highest bit down so that bit n is the n-th least significant
    for n in reversed(range(N)):
        o = ops.get(n)
        if o is None:
            loc = np.eye(2, dtype=complex)
        else:
            # reorder |s>,|g> (pauli convention) into |0>=g, |1>=s
            loc = PAULI[o][::-1, ::-1]
        M = np.kron(M, loc)
    return M


def global_rotation(N, axis, angle):
    """prod_n exp(-i angle sigma_axis^n / 2) on the full space."""
    loc = np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * PAULI[axis][::-1, ::-1]
    M = np.array([[1.0 + 0j]])
    for _ in range(N):
        M = np.kron(M, loc)
    return M
