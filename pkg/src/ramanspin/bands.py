"""Single-excitation Bloch analysis of the two-sublattice square-lattice models.

Both models live on the square lattice with a staggered sign
s = (-1)^(x - y).  Sublattice A holds sites with x + y even, and the
magnetic unit cell pairs A at (x, y) with B at (x + 1, y).  The cell
Bravais vectors are a1 = (1, 1) and a2 = (1, -1).  Quasi-momenta are
given as the Bloch phases k = (k1, k2) = (k.a1, k.a2), so H(k) is
2 pi periodic in each component.

Hopping rules give J[n + v, n] for the site n = (x, y) in the convention
of :func:`ramanspin.drive.coupling_matrix`: J[m, n] multiplies
sigma_gs^m sigma_sg^n, so it is the matrix element <n|H|m>.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize


class GapClosureError(RuntimeError):
    def __init__(self, k, gap):
        super().__init__(f"bands touch at k = ({k[0]:.6f}, {k[1]:.6f}), gap {gap:.3e}")
        self.k = tuple(float(x) for x in k)
        self.gap = gap


def _stagger(x, y):
    return 1 - 2 * ((np.asarray(x) - np.asarray(y)) % 2)


@dataclass(frozen=True)
class BlochModel:
    """Two-band model given by a translation-invariant hopping rule.

    ``rule(x, y, v)`` returns J[n + v, n] for the site n = (x, y); the
    reverse hops follow from Hermiticity.
    """
    name: str
    params: dict
    vectors: tuple
    rule: object = field(repr=False, compare=False)

    def hopping(self, x, y, v):
        return complex(self.rule(x, y, v))


T3_BONDS = {"axial": ((2, 0), (0, 2)), "diagonal": ((2, 2), (2, -2))}


def chiral_flux_model(t1=1.0, t2=None, t3=0.0, phi=np.pi / 4, t3_bonds="axial"):
    """Checkerboard model with staggered flux phases on the NN bonds.

    NN x bonds carry t1 exp(-i s phi), NN y bonds t1 exp(+i s phi),
    diagonals (1, 1) and (1, -1) carry -t2 s and +t2 s, and t3 sits on
    the straight bonds (2, 0), (0, 2) (``t3_bonds="axial"``, the ones the
    2x/2y sidebands address) or on (2, 2), (2, -2) (``"diagonal"``).
    ``t2`` defaults to t1/sqrt(2), which together with phi = pi/4 gives
    the closed-form dispersion of :func:`chiral_flux_closed_form`.

    Axial t3 adds 4 t3 cos(k1) cos(k2) to both bands; diagonal t3 adds
    4 t3 cos(k1 + k2) cos(k1 - k2), which tracks the closed-form
    dispersion and can flatten the lower band.
    """
    t2 = t1 / np.sqrt(2.0) if t2 is None else t2
    far = T3_BONDS[t3_bonds]

    def rule(x, y, v):
        s = _stagger(x, y)
        if v == (1, 0):
            return t1 * np.exp(-1j * s * phi)
        if v == (0, 1):
            return t1 * np.exp(1j * s * phi)
        if v == (1, 1):
            return -t2 * s
        if v == (1, -1):
            return t2 * s
        if v in far:
            return t3
        return 0.0

    return BlochModel("chiral_flux",
                      {"t1": t1, "t2": t2, "t3": t3, "phi": phi, "t3_bonds": t3_bonds},
                      ((1, 0), (0, 1), (1, 1), (1, -1)) + far, rule)


def chiral_flux_flat(t1=1.0, t3_bonds="axial"):
    """Flat-band parameters: t2 = t1/sqrt(2), t3 = t1/(4 sqrt(6)), phi = pi/4."""
    return chiral_flux_model(t1, t1 / np.sqrt(2.0), t1 / (4 * np.sqrt(6.0)), np.pi / 4,
                             t3_bonds)


def chiral_flux_closed_form(k, t1=1.0):
    """+-sqrt(2) t1 sqrt(3 + cos(k1 + k2) cos(k1 - k2)), shape (..., 2)."""
    k = np.asarray(k, dtype=float)
    e = np.sqrt(2.0) * t1 * np.sqrt(3 + np.cos(k[..., 0] + k[..., 1]) * np.cos(k[..., 0] - k[..., 1]))
    return np.stack([-e, e], axis=-1)


def brickwall_model(t1=1.0, t2=None, phi=None):
    """Brick-wall form of the Haldane model.

    NN y bonds t1, NN x bonds t1 (1 - s)/2 (every other bond), and
    t2 exp(+i s phi) on (1, 1), t2 exp(-i s phi) on (1, -1) and (0, 2).
    Defaults: cos(phi) = 3 sqrt(3/43), t2 = t1 sqrt(129)/36.
    """
    from .drive import BRICKWALL_COS_PHI, BRICKWALL_T2_RATIO
    t2 = BRICKWALL_T2_RATIO * t1 if t2 is None else t2
    phi = float(np.arccos(BRICKWALL_COS_PHI)) if phi is None else phi

    def rule(x, y, v):
        s = _stagger(x, y)
        if v == (0, 1):
            return t1
        if v == (1, 0):
            return t1 * (1 - s) / 2
        if v == (1, 1):
            return t2 * np.exp(1j * s * phi)
        if v in ((1, -1), (0, 2)):
            return t2 * np.exp(-1j * s * phi)
        return 0.0

    return BlochModel("brickwall", {"t1": t1, "t2": t2, "phi": phi},
                      ((1, 0), (0, 1), (1, 1), (1, -1), (0, 2)), rule)


MODELS = {"chiral_flux": chiral_flux_model, "brickwall": brickwall_model}


# ---------------------------------------------------------------------------
# Bloch matrices

_REF = ((0, 0), (1, 0))         # A and B sites of the reference cell


def _sublattice(x, y):
    return (x + y) % 2


def _cell(x, y):
    X = x - _sublattice(x, y)
    return ((X + y) // 2, (X - y) // 2)


def _hop_table(model):
    """[(row, col, (dc1, dc2), amplitude)] for H(k)[row, col]."""
    table = []
    for row, (x, y) in enumerate(_REF):
        c0 = _cell(x, y)
        for v in model.vectors:
            for sign in (1, -1):
                mx, my = x + sign * v[0], y + sign * v[1]
                if sign == 1:
                    amp = model.hopping(x, y, v)
                else:
                    # hop n -> n - v is the conjugate of (n - v) -> n
                    amp = np.conj(model.hopping(mx, my, v))
                if amp == 0:
                    continue
                c = _cell(mx, my)
                table.append((row, _sublattice(mx, my), (c[0] - c0[0], c[1] - c0[1]), amp))
    return table


def bloch(model, k):
    """H(k) for k = (k1, k2) of shape (..., 2); returns (..., 2, 2)."""
    k = np.asarray(k, dtype=float)
    H = np.zeros(k.shape[:-1] + (2, 2), dtype=complex)
    for row, col, (d1, d2), amp in _hop_table(model):
        H[..., row, col] += amp * np.exp(1j * (k[..., 0] * d1 + k[..., 1] * d2))
    return H


def bloch_from_couplings(J, lattice, k, origin):
    """H(k) read off a real-space coupling matrix around a bulk cell.

    ``origin`` is an A site (x + y even) far enough from the edges that
    every coupling of it and of its B partner lies inside the patch.
    """
    pos = np.rint(lattice.positions).astype(int)
    index = {tuple(p): i for i, p in enumerate(pos)}
    x0, y0 = origin
    if _sublattice(x0, y0):
        raise ValueError("origin must be an A site (x + y even)")
    k = np.asarray(k, dtype=float)
    H = np.zeros(k.shape[:-1] + (2, 2), dtype=complex)
    for row, (dx, dy) in enumerate(_REF):
        x, y = x0 + dx, y0 + dy
        n = index[(x, y)]
        c0 = _cell(x, y)
        for m in np.nonzero(J[:, n])[0]:
            mx, my = pos[m]
            c = _cell(mx, my)
            ph = k[..., 0] * (c[0] - c0[0]) + k[..., 1] * (c[1] - c0[1])
            H[..., row, _sublattice(mx, my)] += J[m, n] * np.exp(1j * ph)
    return H


def kgrid(n):
    """n x n grid over [0, 2 pi)^2, shape (n, n, 2)."""
    g = 2 * np.pi * np.arange(n) / n
    return np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)


def band_energies(model, grid):
    """Sorted band energies on an n x n grid (or explicit k array)."""
    k = kgrid(grid) if np.isscalar(grid) else np.asarray(grid)
    return np.linalg.eigvalsh(bloch(model, k))


# ---------------------------------------------------------------------------
# flatness and Chern numbers

@dataclass
class Flatness:
    bandwidth: float
    gap: float
    ratio: float
    gapped: bool

    def to_dict(self):
        return {"bandwidth": self.bandwidth, "gap": self.gap,
                "ratio": self.ratio if self.gapped else None, "gapped": self.gapped}


def _direct_gap(model, k):
    E = np.linalg.eigvalsh(bloch(model, np.asarray(k, dtype=float)))
    return float(E[1] - E[0])


def min_direct_gap(model, grid=64, seeds=5):
    """(k, gap) of the smallest direct gap, refined off-grid.

    Band touchings generically sit between grid points, so the smallest
    grid gaps seed a Nelder-Mead search in continuous k.
    """
    k = kgrid(grid)
    E = band_energies(model, k)
    gaps = (E[..., 1] - E[..., 0]).ravel()
    best = (None, np.inf)
    for i in np.argsort(gaps)[:seeds]:
        k0 = k.reshape(-1, 2)[i]
        res = minimize(lambda x: _direct_gap(model, x), k0, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
        cand = (np.mod(res.x, 2 * np.pi), float(res.fun))
        if min(cand[1], gaps[i]) < best[1]:
            best = cand if cand[1] <= gaps[i] else (k0, float(gaps[i]))
    return best


def _closes(model, grid, gap_tol):
    k, g = min_direct_gap(model, grid)
    scale = max(1.0, float(np.abs(band_energies(model, 8)).max()))
    return (k, g) if g <= gap_tol * scale else None


def flatness(model, grid=64, gap_tol=1e-6):
    """Lower-band width, band gap and their ratio on an n x n grid (n >= 64).

    With touching or overlapping bands the ratio is undefined and
    reported as nan with ``gapped=False``.  Touchings between grid points
    are found by :func:`min_direct_gap`.
    """
    if np.isscalar(grid) and grid < 64:
        raise ValueError("grid must be at least 64 x 64")
    E = band_energies(model, grid)
    lo, hi = E[..., 0], E[..., 1]
    width = float(lo.max() - lo.min())
    gap = float(hi.min() - lo.max())
    if gap <= 0 or (np.isscalar(grid) and _closes(model, grid, gap_tol)):
        return Flatness(width, gap if gap <= 0 else 0.0, float("nan"), False)
    return Flatness(width, gap, width / gap, True)


def chern(model, grid=64, gap_tol=1e-6, max_flux=0.75 * np.pi):
    """Chern numbers of both bands by link-variable plaquette summation.

    Raises GapClosureError where the bands touch, on or between grid
    points, and ValueError if some plaquette carries a Berry flux above
    ``max_flux``, where the discretization can no longer be trusted.
    """
    hit = _closes(model, grid, gap_tol)
    if hit:
        raise GapClosureError(*hit)
    k = kgrid(grid)
    H = bloch(model, k)
    E, V = np.linalg.eigh(H)
    out = []
    for b in range(2):
        u = V[..., :, b]
        U1 = np.sum(u.conj() * np.roll(u, -1, axis=0), axis=-1)
        U2 = np.sum(u.conj() * np.roll(u, -1, axis=1), axis=-1)
        U1 /= np.abs(U1)
        U2 /= np.abs(U2)
        F = np.angle(U1 * np.roll(U2, -1, axis=0) / (np.roll(U1, -1, axis=1) * U2))
        if np.abs(F).max() > max_flux:
            raise ValueError(f"plaquette Berry flux {np.abs(F).max():.3f} exceeds {max_flux:.3f}; "
                             "refine the grid")
        out.append(int(np.rint(F.sum() / (2 * np.pi))))
    return tuple(out)


def write_band_csv(path, model, grid=64):
    """CSV with columns k1, k2, E_lower, E_upper (row-major in k1)."""
    k = kgrid(grid)
    E = band_energies(model, k)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k1", "k2", "E_lower", "E_upper"])
        for i in range(k.shape[0]):
            for j in range(k.shape[1]):
                wr.writerow([f"{v:.12e}" for v in (*k[i, j], *E[i, j])])


def summary_json(model, grid=64):
    f = flatness(model, grid)
    try:
        c = list(chern(model, grid))
    except GapClosureError as exc:
        c = {"error": str(exc)}
    return json.dumps({"model": model.name, "params": model.params, "grid": grid,
                       "flatness": f.to_dict(), "chern": c}, indent=2, default=float)
