"""Multi-frequency Raman drives and the couplings they induce.

A sideband alpha carries a detuning w_alpha and a spatial amplitude

    X_alpha(r) = sum_c a_c exp(i pi k_c . r),

with wavevectors k_c in units of pi/d.  A pair of sidebands (alpha at site n,
beta at site m) is resonant for the pair (m, n) when

    w_m - w_n = w_beta - w_alpha

and contributes X_alpha(r_n) X_beta(r_m)^* Jtilde(|r_m - r_n|) to J[m, n].
J[m, n] multiplies sigma_gs^m sigma_sg^n, which moves an excitation from m
to n; in the one-excitation sector the hopping matrix is therefore J^T.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import k0

from .lattice import GOLDEN


class ResonanceAmbiguityWarning(UserWarning):
    """Two distinct sideband frequency differences address the same pair."""


class SolverError(RuntimeError):
    def __init__(self, message, best_residual, best=None):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual
        self.best = best


# ---------------------------------------------------------------------------
# data types

@dataclass(frozen=True)
class Sideband:
    """One frequency component of the drive.

    ``components`` is a tuple of (complex amplitude, wavevector) pairs; a
    two-beam sideband has two entries.  ``pump`` marks the strong carrier.
    """

    detuning: float
    components: tuple = ((1.0, (0.0,)),)
    pump: bool = False

    @classmethod
    def single(cls, detuning, amplitude, wavevector=(0.0,), pump=False):
        return cls(float(detuning), ((complex(amplitude), tuple(wavevector)),), pump)

    @property
    def amplitude(self):
        return complex(self.components[0][0])

    @property
    def wavevector(self):
        return tuple(self.components[0][1])

    def scaled(self, c):
        return Sideband(self.detuning, tuple((a * c, k) for a, k in self.components), self.pump)

    def at(self, positions):
        """Spatial amplitude X(r) at each row of ``positions`` (units of d)."""
        r = np.atleast_2d(np.asarray(positions, dtype=float))
        out = np.zeros(r.shape[0], dtype=complex)
        for a, k in self.components:
            kv = np.zeros(r.shape[1])
            kk = np.asarray(k, dtype=float)[: r.shape[1]]
            kv[: len(kk)] = kk
            out += complex(a) * np.exp(1j * np.pi * (r @ kv))
        return out

    def intensity(self):
        return float(sum(abs(a) ** 2 for a, _ in self.components))


@dataclass(frozen=True)
class RamanDrive:
    sidebands: tuple = ()
    mode: str = "frequency"

    def __post_init__(self):
        if self.mode not in ("frequency", "amplitude"):
            raise ValueError(f"unknown modulation mode {self.mode!r}")
        if self.mode == "amplitude":
            for s in self.sidebands:
                if s.detuning == 0:
                    continue
                if not any(np.isclose(o.detuning, -s.detuning) and _same_components(o, s)
                           for o in self.sidebands):
                    raise ValueError(f"sideband at {s.detuning} has no partner at {-s.detuning}")

    def __len__(self):
        return len(self.sidebands)

    @property
    def detunings(self):
        return np.array([s.detuning for s in self.sidebands], dtype=float)

    def amplitudes(self, positions):
        """Array (n_sidebands, n_sites) of X_alpha(r_n)."""
        if not self.sidebands:
            return np.zeros((0, len(np.atleast_2d(positions))), dtype=complex)
        return np.array([s.at(positions) for s in self.sidebands])

    def total_intensity(self):
        return float(sum(s.intensity() for s in self.sidebands))

    def to_json(self):
        return json.dumps({
            "mode": self.mode,
            "sidebands": [{
                "detuning": s.detuning,
                "pump": s.pump,
                "components": [{"amplitude": [complex(a).real, complex(a).imag],
                                "wavevector": list(k)} for a, k in s.components],
            } for s in self.sidebands],
        }, indent=2)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        sbs = []
        for s in d["sidebands"]:
            comps = tuple((complex(c["amplitude"][0], c["amplitude"][1]), tuple(c["wavevector"]))
                          for c in s["components"])
            sbs.append(Sideband(float(s["detuning"]), comps, bool(s.get("pump", False))))
        return cls(tuple(sbs), d.get("mode", "frequency"))


def _same_components(a, b):
    if len(a.components) != len(b.components):
        return False
    return all(np.isclose(x, y) and np.allclose(kx, ky)
               for (x, kx), (y, ky) in zip(a.components, b.components))


def amplitude_modulated(sidebands):
    """Add a partner at -w with equal amplitude for every detuned sideband."""
    out = list(sidebands)
    for s in sidebands:
        if s.detuning != 0:
            out.append(Sideband(-s.detuning, s.components, s.pump))
    return RamanDrive(tuple(out), "amplitude")


@dataclass(frozen=True)
class CouplingKernel:
    """Photon-mediated exchange strength versus separation."""

    variant: str = "constant"
    Jtilde: float = 1.0
    xi: float = np.inf

    def __post_init__(self):
        if self.variant not in ("constant", "exp1d", "bessel2d"):
            raise ValueError(f"unknown kernel {self.variant!r}")
        if self.variant != "constant" and not (self.xi > 0 and np.isfinite(self.xi)):
            raise ValueError("xi must be finite and positive for decaying kernels")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.variant == "constant":
            return np.full(r.shape, self.Jtilde)
        if self.variant == "exp1d":
            return self.Jtilde * np.exp(-np.abs(r) / self.xi)
        with np.errstate(divide="ignore"):
            return self.Jtilde * k0(np.abs(r) / self.xi) / k0(1.0 / self.xi)


# ---------------------------------------------------------------------------
# forward map

def _resolve_tol(lattice, tol):
    return 1e-6 * lattice.unit if tol is None else float(tol)


def coupling_matrix(lattice, drive, kernel=None, resonance_tol=None, pump_pairs_only=False):
    """Resonant coupling matrix J[m, n] induced by ``drive`` on ``lattice``.

    Parameters
    ----------
    resonance_tol : float, optional
        Absolute tolerance on the frequency mismatch, in shift units.
        Defaults to 1e-6 times the lattice gradient unit.
    pump_pairs_only : bool
        Keep only sideband pairs that involve a pump.  This is the leading
        order in the weak sidebands and realizes the 2D recipes exactly.
    """
    kernel = CouplingKernel() if kernel is None else kernel
    tol = _resolve_tol(lattice, resonance_tol)
    N = lattice.N
    J = np.zeros((N, N), dtype=complex)
    if not len(drive):
        return J
    w = lattice.shifts
    D = w[:, None] - w[None, :]
    K = kernel(lattice.distances())
    np.fill_diagonal(K, 0.0)
    X = drive.amplitudes(lattice.positions)
    det = drive.detunings
    pumps = np.array([s.pump for s in drive.sidebands])
    offdiag = ~np.eye(N, dtype=bool)
    hits = {}
    for a in range(len(det)):
        for b in range(len(det)):
            if pump_pairs_only and not (pumps[a] or pumps[b]):
                continue
            dw = det[b] - det[a]
            mask = (np.abs(D - dw) <= tol) & offdiag
            if not mask.any():
                continue
            J[mask] += (np.conj(X[b])[:, None] * X[a][None, :] * K)[mask]
            key = round(dw / lattice.unit, 9)
            hits.setdefault(key, np.zeros((N, N), dtype=bool))
            hits[key] |= mask
    if len(hits) > 1:
        count = sum(m.astype(int) for m in hits.values())
        bad = np.argwhere(count > 1)
        if len(bad):
            pairs = [tuple(int(i) for i in p) for p in bad]
            warnings.warn(f"ambiguous resonance for pairs {pairs[:8]}"
                          + (" ..." if len(pairs) > 8 else ""), ResonanceAmbiguityWarning,
                          stacklevel=2)
    return J


# ---------------------------------------------------------------------------
# Stark shifts

@dataclass
class StarkSeries:
    """Per-site Stark amplitudes A_p^n, keyed by integer p (commensurate)
    or by the rounded angular frequency (incommensurate)."""

    components: dict
    offset: np.ndarray
    delta: float | None = None

    def site_independent(self, tol=1e-12):
        return all(np.ptp(a.real) <= tol and np.ptp(a.imag) <= tol for a in self.components.values())


def stark_series(lattice, drive, delta_ratio=1.0, delta=None, tol=1e-9):
    """Time-dependent Stark amplitudes on |s>.

    A_p^n = -Delta * sum_{alpha != beta, w_alpha - w_beta = p delta}
    X_alpha(r_n) X_beta(r_n)^*, with Delta given as the ratio Delta/Jtilde.
    The static part -Delta sum |X_alpha|^2 is returned as ``offset``.
    """
    X = drive.amplitudes(lattice.positions)
    det = drive.detunings
    comps = {}
    for a in range(len(det)):
        for b in range(len(det)):
            if a == b:
                continue
            dw = det[a] - det[b]
            if delta is not None:
                p = int(round(dw / delta))
                if abs(dw - p * delta) > tol * abs(delta):
                    raise ValueError(f"detuning difference {dw} is not a multiple of {delta}")
                key = p
            else:
                key = round(float(dw), 9)
            if key == 0:
                # equal detunings belong to the static part
                continue
            comps.setdefault(key, np.zeros(lattice.N, dtype=complex))
            comps[key] += -delta_ratio * X[a] * np.conj(X[b])
    offset = -delta_ratio * np.sum(np.abs(X) ** 2, axis=0) if len(det) else np.zeros(lattice.N)
    if len(det):
        # cross terms between distinct sidebands at the same frequency are static too
        for a in range(len(det)):
            for b in range(len(det)):
                if a != b and abs(det[a] - det[b]) <= tol * max(lattice.unit, 1.0):
                    offset = offset - delta_ratio * (X[a] * np.conj(X[b])).real
    return StarkSeries(dict(sorted(comps.items())), np.real(offset), delta)


# ---------------------------------------------------------------------------
# 1D synthesis

def chain_drive(X, delta=1.0):
    """Drive with sideband alpha at detuning alpha * delta, no propagation phase."""
    X = np.asarray(X, dtype=complex)
    sbs = tuple(Sideband.single(a * delta, X[a], (0.0,), pump=(a == 0)) for a in range(len(X)))
    return RamanDrive(sbs)


def autocorrelation(X):
    """r_k = sum_alpha X_alpha X_{alpha+k}^*, k = 0..len(X)-1."""
    X = np.asarray(X, dtype=complex)
    N = len(X)
    return np.array([np.sum(X[: N - k] * np.conj(X[k:])) for k in range(N)])


@dataclass
class SidebandSolution:
    amplitudes: np.ndarray
    residual: float
    intensity: float
    mode: str
    trace: list = field(default_factory=list)

    def drive(self, delta=1.0):
        return chain_drive(self.amplitudes, delta)

    def write_trace(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iteration", "residual", "total_intensity"])
            for row in self.trace:
                wr.writerow([row[0], f"{row[1]:.12e}", f"{row[2]:.12e}"])


def _rel_residual(X, r):
    got = autocorrelation(X)[1:]
    scale = np.maximum(np.abs(r), np.finfo(float).eps * max(np.abs(r).max(), 1e-300))
    return float(np.max(np.abs(got - r) / scale))


def _min_spectrum(r):
    """min over w of 2 Re sum_k r_k e^{-ikw}."""
    n = len(r)
    M = max(1 << 14, 64 * n)
    c = np.zeros(M, dtype=complex)
    c[1: n + 1] = r
    f = 2.0 * np.real(np.fft.fft(c))
    i = int(np.argmin(f))
    w0 = 2 * np.pi * i / M
    k = np.arange(1, n + 1)

    def g(w):
        return 2.0 * np.real(np.sum(r * np.exp(-1j * k * w)))

    res = minimize_scalar(g, bounds=(w0 - 2 * np.pi / M, w0 + 2 * np.pi / M), method="bounded",
                          options={"xatol": 1e-14})
    return min(float(res.fun), float(f[i]))


def _spectral_seed(r, margin):
    """Minimum-phase factor of the autocorrelation with r_0 just above its floor."""
    n = len(r)
    floor = -_min_spectrum(r)
    r0 = floor + margin * max(abs(floor), np.abs(r).max())
    full = np.concatenate([np.conj(r[::-1]), [r0], r])  # r_{-(n)} .. r_n
    roots = np.roots(full[::-1])
    roots = roots[np.argsort(np.abs(roots))][:n]
    c = np.poly(roots)
    best = None
    for cand in (c, c[::-1], np.conj(c), np.conj(c[::-1])):
        a = autocorrelation(cand)
        s = np.sqrt(r0 / a[0].real)
        X = cand * s
        err = np.abs(autocorrelation(X)[1:] - r).max()
        if best is None or err < best[0]:
            best = (err, X)
    return best[1]


def _gauss_newton(X, r, lam, real, max_iter, tol, trace, it0):
    N = len(X)
    rr = np.concatenate([r.real, r.imag]) if not real else r.real

    def unpack(x):
        return x.astype(complex) if real else x[:N] + 1j * x[N:]

    def resid(x):
        a = autocorrelation(unpack(x))[1:]
        f = a.real - rr if real else np.concatenate([a.real, a.imag]) - rr
        return f

    def jac(x):
        Xc = unpack(x)
        rows = []
        for k in range(1, N):
            dA = np.zeros(N, dtype=complex)
            dB = np.zeros(N, dtype=complex)
            # d r_k / d a_j = conj(X_{j+k}) + X_{j-k};  d r_k / d b_j = i conj(X_{j+k}) - i X_{j-k}
            dA[: N - k] += np.conj(Xc[k:])
            dA[k:] += Xc[: N - k]
            dB[: N - k] += 1j * np.conj(Xc[k:])
            dB[k:] += -1j * Xc[: N - k]
            rows.append((dA, dB))
        if real:
            return np.array([dA.real for dA, _ in rows])
        top = np.array([np.concatenate([dA.real, dB.real]) for dA, dB in rows])
        bot = np.array([np.concatenate([dA.imag, dB.imag]) for dA, dB in rows])
        return np.vstack([top, bot])

    x = X.real.copy() if real else np.concatenate([X.real, X.imag])
    mu = 1e-3
    it = it0
    for _ in range(max_iter):
        f = resid(x)
        cost = f @ f + lam * (x @ x)
        Jm = jac(x)
        g = Jm.T @ f + lam * x
        A = Jm.T @ Jm + lam * np.eye(len(x))
        accepted = False
        for _ in range(30):
            step = np.linalg.solve(A + mu * np.diag(np.diag(A) + 1e-300), -g)
            xn = x + step
            fn = resid(xn)
            cn = fn @ fn + lam * (xn @ xn)
            if cn <= cost:
                x, mu, accepted = xn, max(mu / 3, 1e-12), True
                break
            mu *= 4
        it += 1
        Xc = unpack(x)
        trace.append((it, _rel_residual(Xc, r), float(np.sum(np.abs(Xc) ** 2))))
        if not accepted or np.linalg.norm(step) <= tol * (1 + np.linalg.norm(x)):
            break
    return unpack(x), it


def solve_sidebands_1d(target, mode="optimized", Jtilde=1.0, X0=10.0, real=None,
                       lam_sweep=(1e-6, 1e-9, 1e-12, 0.0), margin=1e-10, max_iter=60,
                       accept=1e-8):
    """Sideband amplitudes X_0..X_{N-1} reproducing the chain profile ``target``.

    Parameters
    ----------
    target : array_like
        J_1..J_{N-1}, coupling at separation n.
    mode : {"perturbative", "optimized"}
        Perturbative keeps a strong X_0 and sets X_n = J_n^* / (X_0 Jtilde).
        Optimized solves J_n = Jtilde sum_alpha X_alpha X_{alpha+n}^* for the
        lowest total intensity found.
    real : bool, optional
        Real-valued ansatz; defaults to True when the target is real.
    """
    r = np.asarray(target, dtype=complex) / Jtilde
    if r.ndim != 1 or len(r) < 1:
        raise ValueError("need at least two sites (target of length N-1 >= 1)")
    N = len(r) + 1
    if real is None:
        real = bool(np.all(r.imag == 0))
    if mode == "perturbative":
        X = np.zeros(N, dtype=complex)
        X[0] = X0
        X[1:] = np.conj(r) / X0
        return SidebandSolution(X, _rel_residual(X, r), float(np.sum(np.abs(X) ** 2)), mode)
    if mode != "optimized":
        raise ValueError(f"unknown mode {mode!r}")
    trace = []
    try:
        X = _spectral_seed(r, margin)
    except np.linalg.LinAlgError:
        X = np.zeros(N, dtype=complex)
        X[0] = X0
        X[1:] = np.conj(r) / X0
    if real:
        X = X.real.astype(complex)
    trace.append((0, _rel_residual(X, r), float(np.sum(np.abs(X) ** 2))))
    best = (trace[-1][1], X)
    it = 0
    for lam in lam_sweep:
        X, it = _gauss_newton(X, r, lam * max(np.abs(r).max(), 1.0), real, max_iter, 1e-15, trace, it)
        res = _rel_residual(X, r)
        if res < best[0] or lam == 0.0:
            best = (res, X)
    res, X = best
    if not np.isfinite(res) or res > accept:
        raise SolverError("sideband solver did not converge", res, X)
    return SidebandSolution(X, res, float(np.sum(np.abs(X) ** 2)), mode, trace)


# ---------------------------------------------------------------------------
# 2D recipes

def square_detunings(B2=1.0, q=GOLDEN):
    """Detunings addressing the separations used by the 2D recipes."""
    return {"x": q * B2, "y": B2, "xy": (q + 1) * B2, "xy*": (q - 1) * B2,
            "2x": 2 * q * B2, "2y": 2 * B2}


def _finish(parts, mode):
    sbs = tuple(parts)
    if mode == "frequency":
        return RamanDrive(sbs)
    if mode == "amplitude":
        # each sideband at +w and -w contributes once, so halve the weak amplitudes
        half = [s if s.pump else s.scaled(0.5) for s in sbs]
        return amplitude_modulated(half)
    raise ValueError(f"unknown modulation mode {mode!r}")


def chiral_flux_drive(t1, t2=0.0, t3=0.0, zeta=0.0, mode="frequency", a0=1.0, Jtilde=1.0,
                      B2=1.0, q=GOLDEN):
    """Two-beam drive for the staggered-flux checkerboard model.

    Realizes (pump pairs, site n -> m = n + v, s = (-1)^(n_x - n_y)):
    v = x: t1 (1 - i zeta s)/sqrt(1+zeta^2); v = y: t1 (1 + i zeta s)/sqrt(1+zeta^2);
    v = (1,1): -t2 s; v = (1,-1): +t2 s; v = (2,0), (0,2): t3.
    """
    if min(t1, t2, t3, zeta) < 0:
        raise ValueError("t1, t2, t3, zeta must be >= 0")
    det = square_detunings(B2, q)
    c = np.sqrt(1 + zeta ** 2)
    ex, ey = (1.0, 0.0), (0.0, 1.0)
    a1 = t1 / (Jtilde * a0 * c)
    a2 = t2 / (Jtilde * a0)
    a3 = t3 / (Jtilde * a0)
    parts = [Sideband(0.0, ((a0, ey),), pump=True)]
    if a1:
        parts.append(Sideband(det["x"], ((a1, ey), (-1j * zeta * a1, ex))))
        parts.append(Sideband(det["y"], ((-a1, ey), (-1j * zeta * a1, ex))))
    if a2:
        parts.append(Sideband(det["xy"], ((a2, ex),)))
        parts.append(Sideband(det["xy*"], ((-a2, ex),)))
    if a3:
        parts.append(Sideband(det["2x"], ((a3, ey),)))
        parts.append(Sideband(det["2y"], ((a3, ey),)))
    return _finish(parts, mode)


BRICKWALL_COS_PHI = 3.0 * np.sqrt(3.0 / 43.0)
BRICKWALL_T2_RATIO = np.sqrt(129.0) / 36.0


def brickwall_drive(t1, t2=None, phi=None, a0=1.0, Jtilde=1.0, B2=1.0, q=GOLDEN):
    """Drive for the brick-wall (honeycomb-equivalent) Haldane model.

    NN-y is uniform t1, NN-x is (t1/2)(1 - s), and the NNN (1,+-1) and NNNN
    (0,2) couplings have magnitude t2 with phases +-phi set by the
    sublattice sign s.  Defaults: cos(phi) = 3 sqrt(3/43),
    t2 = t1 sqrt(129)/36.
    """
    if t2 is None:
        t2 = BRICKWALL_T2_RATIO * t1
    if phi is None:
        phi = float(np.arccos(BRICKWALL_COS_PHI))
    if min(t1, t2) < 0:
        raise ValueError("t1, t2 must be >= 0")
    det = square_detunings(B2, q)
    ex, ey = (1.0, 0.0), (0.0, 1.0)
    a1 = t1 / (Jtilde * a0)
    b = t1 / (2 * Jtilde * a0)
    # real part sets t2 cos(phi), the pi/2-shifted x beam sets t2 sin(phi)
    ar = t2 * np.cos(phi) / (Jtilde * a0)
    ai = 1j * t2 * np.sin(phi) / (Jtilde * a0)
    parts = [Sideband(0.0, ((a0, ey),), pump=True),
             Sideband(det["y"], ((-a1, ey),)),
             Sideband(det["x"], ((b, ey), (b, ex)))]
    if t2:
        parts.append(Sideband(det["2y"], ((ar, ey), (ai, ex))))
        parts.append(Sideband(det["xy"], ((-ar, ey), (ai, ex))))
        parts.append(Sideband(det["xy*"], ((-ar, ey), (-ai, ex))))
    return RamanDrive(tuple(parts))
