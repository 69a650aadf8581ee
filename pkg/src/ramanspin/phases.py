"""Magnetization scans of the 2D XXZ model with 1/r^eta couplings.

    H = -B sum_n sz_n + sum_{n<m} J/r^eta [cos(theta) sz sz + sin(theta) (sx sx + sy sy)]

The couplings conserve the excitation number and are invariant under a
global spin flip, so the sector ground energies obey E(n) = E(N - n) and
sectors n <= N/2 cover every sector.  With sz|s> = +1 the field favours
n >= N/2 for B >= 0.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse.linalg as spla

from .hamiltonian import build_sector, build_xy, build_zz, xxz_eta_target

DENSE_LIMIT = 1500
DEFAULT_THETA = np.linspace(-np.pi / 2, np.pi / 2, 41)
DEFAULT_B = np.linspace(0.0, 3.0, 61)


def lowest_eigenvalue(op, tol=0.0):
    """Smallest eigenvalue of a Hermitian sector operator (Lanczos above DENSE_LIMIT)."""
    M = op.matrix if hasattr(op, "matrix") else op
    n = M.shape[0]
    if n <= DENSE_LIMIT:
        return float(np.linalg.eigvalsh(M.toarray())[0])
    # fixed start vector keeps repeated runs bit-identical
    v0 = np.cos(np.arange(n) * 0.7) + 1.5
    w = spla.eigsh(M, k=1, which="SA", v0=v0, tol=tol, return_eigenvectors=False)
    return float(w[0])


@dataclass
class XXZSectors:
    """Unit XY and ZZ sector operators for sectors 0..n_max of one lattice and eta."""
    N: int
    eta: object
    J: float
    xy: list
    zz: list

    def hamiltonian(self, n, theta):
        return self.xy[n] * np.sin(theta) + self.zz[n] * np.cos(theta)


def xxz_sectors(lattice, eta, J=1.0, n_max=None):
    N = lattice.N
    n_max = N // 2 if n_max is None else int(n_max)
    if n_max > N // 2:
        raise ValueError("n_max must be <= N/2; higher sectors follow by particle-hole symmetry")
    Jxy, Jz = xxz_eta_target(lattice, J, eta, np.pi / 2)[0], xxz_eta_target(lattice, J, eta, 0.0)[1]
    xy, zz = [], []
    for n in range(n_max + 1):
        sec = build_sector(N, n)
        # sx sx + sy sy = 2 (s+ s- + h.c.)
        xy.append(build_xy(2.0 * Jxy.astype(complex), sec))
        zz.append(build_zz(Jz, sec))
    return XXZSectors(N, eta, J, xy, zz)


def sector_energies(sectors, theta):
    """Ground energies E(n) for n = 0..N (field excluded)."""
    half = [lowest_eigenvalue(sectors.hamiltonian(n, theta)) for n in range(len(sectors.xy))]
    N = sectors.N
    E = np.full(N + 1, np.nan)
    for n, e in enumerate(half):
        E[n] = e
        E[N - n] = e
    if np.isnan(E).any():
        raise ValueError("sectors up to N/2 are needed to cover all n")
    return E


def winning_sector(E, B, N, tol=1e-9):
    """(n, tied) minimizing E(n) - B (2n - N); ties resolve to the lowest n."""
    n = np.arange(N + 1)
    tot = E - B * (2 * n - N)
    best = tot.min()
    tied = np.nonzero(tot <= best + tol * max(1.0, abs(best)))[0]
    return int(tied[0]), [int(t) for t in tied]


@dataclass
class ScanResult:
    eta: object
    theta: np.ndarray
    B: np.ndarray
    M_over_N: np.ndarray            # (n_theta, n_B)
    winner: np.ndarray              # (n_theta, n_B)
    energies: np.ndarray            # (n_theta, N + 1)
    ties: list = field(default_factory=list)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["theta", "B", "M_over_N", "winning_sector"])
            for i, t in enumerate(self.theta):
                for j, b in enumerate(self.B):
                    wr.writerow([f"{t:.12e}", f"{b:.12e}", f"{self.M_over_N[i, j]:.12e}",
                                 int(self.winner[i, j])])

    def metadata(self):
        return {"eta": self.eta, "n_theta": len(self.theta), "n_B": len(self.B),
                "theta_range": [float(self.theta[0]), float(self.theta[-1])],
                "B_range": [float(self.B[0]), float(self.B[-1])], "ties": len(self.ties)}


def _energies_task(args):
    lattice, eta, J, theta = args
    return sector_energies(xxz_sectors(lattice, eta, J), theta)


def magnetization_scan(lattice, eta, theta_grid=None, B_grid=None, n_exc_max=8, J=1.0,
                       workers=1):
    """M/N over (theta, B) from sector ground energies with n <= n_exc_max.

    For each theta the sectors 0..n_exc_max are diagonalized once; the
    field only shifts them, so the B scan is a lookup.  Sectors above
    N/2 come from E(n) = E(N - n).
    """
    theta = DEFAULT_THETA if theta_grid is None else np.asarray(theta_grid, dtype=float)
    Bs = DEFAULT_B if B_grid is None else np.asarray(B_grid, dtype=float)
    if np.any(Bs < 0):
        raise ValueError("B grid must be >= 0")
    N = lattice.N
    if n_exc_max < N // 2:
        raise ValueError("n_exc_max must reach N/2 to cover the B >= 0 half-plane")
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            energies = list(ex.map(_energies_task, [(lattice, eta, J, t) for t in theta]))
    else:
        sectors = xxz_sectors(lattice, eta, J, min(n_exc_max, N // 2))
        energies = [sector_energies(sectors, t) for t in theta]
    energies = np.array(energies)
    M = np.zeros((len(theta), len(Bs)))
    win = np.zeros((len(theta), len(Bs)), dtype=int)
    ties = []
    for i in range(len(theta)):
        for j, b in enumerate(Bs):
            n, tied = winning_sector(energies[i], b, N)
            win[i, j] = n
            M[i, j] = (2 * n - N) / (2.0 * N)
            if len(tied) > 1:
                ties.append((float(theta[i]), float(b), tied))
    return ScanResult(eta, theta, Bs, M, win, energies, ties)


def asymmetry(scan):
    """sum over the grid of |M(theta) - M(-theta)|; theta grid must be symmetric."""
    th = scan.theta
    if not np.allclose(th, -th[::-1], atol=1e-12):
        raise ValueError("theta grid is not symmetric about 0")
    return float(np.abs(scan.M_over_N - scan.M_over_N[::-1]).sum())


# ---------------------------------------------------------------------------
# classical line theta = 0

def classical_energies(lattice, eta, J=1.0):
    """Minimum ZZ energy per excitation number by enumerating all 2^N patterns."""
    N = lattice.N
    if N > 24:
        raise ValueError("enumeration is limited to N <= 24")
    Jz = np.triu(xxz_eta_target(lattice, J, eta, 0.0)[1], 1)
    E = np.full(N + 1, np.inf)
    chunk = 1 << min(N, 16)
    for start in range(0, 1 << N, chunk):
        s = np.arange(start, start + chunk, dtype=np.int64)
        z = 2.0 * ((s[:, None] >> np.arange(N)) & 1) - 1.0
        e = np.einsum("im,mn,in->i", z, Jz, z)
        n = ((z.sum(axis=1) + N) / 2).astype(int)
        np.minimum.at(E, n, e)
    return E


@dataclass
class Plateau:
    B_start: float
    B_end: float
    n_exc: int
    M_over_N: float
    filling: Fraction


def staircase_cut(lattice, eta, B_grid=None, J=1.0):
    """Magnetization plateaus along theta = 0 from classical enumeration."""
    Bs = DEFAULT_B if B_grid is None else np.asarray(B_grid, dtype=float)
    E = classical_energies(lattice, eta, J)
    N = lattice.N
    wins = [winning_sector(E, b, N)[0] for b in Bs]
    plateaus = []
    for b, n in zip(Bs, wins):
        if plateaus and plateaus[-1].n_exc == n:
            plateaus[-1].B_end = float(b)
        else:
            plateaus.append(Plateau(float(b), float(b), n, (2 * n - N) / (2.0 * N),
                                    Fraction(n, N)))
    return plateaus


def plateaus_json(plateaus):
    return json.dumps([{"B_start": p.B_start, "B_end": p.B_end, "n_exc": p.n_exc,
                        "M_over_N": p.M_over_N, "filling": str(p.filling)} for p in plateaus],
                      indent=2)
