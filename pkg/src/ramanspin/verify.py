"""Invariant suite behind the ``verify`` subcommand."""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from .drive import (RamanDrive, chain_drive, chiral_flux_drive, coupling_matrix,
                    solve_sidebands_1d)
from .hamiltonian import (build_butterfly_xxyy, build_sector, build_xy, full_space,
                          global_rotation, hs_fourier, hs_profile, hs_target, pauli_string)
from .lattice import Lattice, build_chain, build_square


@dataclass
class Check:
    name: str
    ok: bool
    value: float
    detail: str = ""
    seconds: float = 0.0

    def to_dict(self):
        return {"name": self.name, "ok": bool(self.ok), "value": float(self.value),
                "detail": self.detail}


def _xx_yy(N, m, n):
    return pauli_string(N, {m: "x", n: "x"}) + pauli_string(N, {m: "y", n: "y"})


def check_hermiticity(tol=1e-12):
    rng = np.random.default_rng(7)
    worst = 0.0
    # one-step HS series: H_0 Hermitian and H_p^dagger = H_-p
    N = 6
    sol = solve_sidebands_1d(hs_profile(N))
    ser = hs_fourier(N, sol.drive(), 1.0, build_sector(N, N // 2))
    for p in ser.components:
        d = ser.get(p).matrix.conj().T - ser.get(-p).matrix
        worst = max(worst, float(abs(d).max()) if d.nnz else 0.0)
    # 2D chiral-flux couplings
    J = coupling_matrix(build_square(4, 4), chiral_flux_drive(1.0, 0.5, 0.1, zeta=1.0),
                        pump_pairs_only=True)
    worst = max(worst, float(np.abs(J - J.conj().T).max()))
    # butterfly XX/YY with random phase
    Jb = rng.normal(size=(4, 4))
    Jb = np.triu(Jb, 1)
    op = build_butterfly_xxyy(Jb, rng.uniform(0, 2 * np.pi), full_space(4))
    worst = max(worst, op.hermiticity_error())
    return Check("hermiticity", worst <= tol, worst, "max |H^dagger - H| over HS series, 2D couplings, butterfly")


def check_sz_conservation(tol=1e-12):
    rng = np.random.default_rng(11)
    N = 5
    J = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
    J = J + J.conj().T
    np.fill_diagonal(J, 0)
    H = build_xy(J, full_space(N)).toarray()
    Sz = sum(pauli_string(N, {n: "z"}) for n in range(N))
    err = float(np.abs(H @ Sz - Sz @ H).max())
    return Check("sz_conservation", err <= tol, err, "[H_XY, sum sz] on random complex couplings, N=5")


def rotation_identity_errors(N=2, m=0, n=1):
    """Errors of the four printed identities and of their corrected forms.

    Printed: R_x(+-pi/2) (XX+YY) R_x^dag = XX -+ ZZ and
    R_y(+-pi/2) (XX+YY) R_y^dag = YY +- ZZ, with R_n(a) = exp(i a sigma.n / 2).
    """
    XY = _xx_yy(N, m, n)
    XX = pauli_string(N, {m: "x", n: "x"})
    YY = pauli_string(N, {m: "y", n: "y"})
    ZZ = pauli_string(N, {m: "z", n: "z"})
    printed, corrected = {}, {}
    for axis, keep in (("x", XX), ("y", YY)):
        for sign in (+1, -1):
            # exp(i a sigma/2) = global_rotation(axis, -a)
            R = global_rotation(N, axis, -sign * np.pi / 2)
            lhs = R @ XY @ R.conj().T
            s = -sign if axis == "x" else sign
            printed[(axis, sign)] = float(np.abs(lhs - (keep + s * ZZ)).max())
            corrected[(axis, sign)] = float(np.abs(lhs - (keep + ZZ)).max())
    return printed, corrected


def check_rotation_identities(tol=1e-12):
    printed, _ = rotation_identity_errors()
    bad = [f"R_{a}({'+' if s > 0 else '-'}pi/2)" for (a, s), e in printed.items() if e > tol]
    worst = max(printed.values())
    detail = "printed sign convention; failing: " + (", ".join(bad) if bad else "none")
    return Check("rotation_identities", not bad, worst, detail)


def check_rotation_identities_corrected(tol=1e-12):
    _, corrected = rotation_identity_errors()
    worst = max(corrected.values())
    return Check("rotation_identities_corrected", worst <= tol, worst,
                 "R_x(+-pi/2): XX + ZZ, R_y(+-pi/2): YY + ZZ for both signs")


def check_resonance_selectivity(tol=1e-12):
    worst = 0.0
    N = 7
    lat = build_chain(N, 1.0)
    for k in range(1, N):
        drive = chain_drive(np.array([1.0] + [0.0] * (k - 1) + [0.5]), 1.0)
        J = coupling_matrix(lat, drive)
        sep = np.abs(np.subtract.outer(np.arange(N), np.arange(N)))
        worst = max(worst, float(np.abs(J[sep != k]).max()))
        if np.abs(J[sep == k]).min() < 0.1:
            worst = max(worst, 1.0)
    # 2D: only the addressed separation vectors couple
    sq = build_square(4, 4)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        J = coupling_matrix(sq, chiral_flux_drive(1.0, 0.5, 0.2, zeta=1.0), pump_pairs_only=True)
    pos = sq.positions
    allowed = {(1, 0), (0, 1), (1, 1), (1, -1), (2, 0), (0, 2)}
    allowed |= {(-a, -b) for a, b in allowed}
    for m in range(sq.N):
        for n in range(sq.N):
            v = tuple(int(round(c)) for c in pos[m] - pos[n])
            if v not in allowed:
                worst = max(worst, abs(J[m, n]))
    return Check("resonance_selectivity", worst <= tol, worst,
                 "single sideband pairs address one separation (chain), chiral-flux drive addresses only its bonds (4x4)")


def check_drive_roundtrip(tol=1e-6):
    worst = 0.0
    # serialization round trips
    d = chiral_flux_drive(1.0, 0.7, 0.1, zeta=0.5, mode="amplitude")
    d2 = RamanDrive.from_json(d.to_json())
    worst = max(worst, 0.0 if d2 == d else 1.0)
    lat = build_square(3, 2)
    worst = max(worst, 0.0 if Lattice.from_json(lat.to_json()) == lat else 1.0)
    # solver forward map
    for N in (6, 8):
        target = hs_target(N)
        sol = solve_sidebands_1d(hs_profile(N))
        J = coupling_matrix(build_chain(N, 1.0), sol.drive())
        off = target != 0
        rel = np.abs(J[off] - target[off]) / np.abs(target[off])
        worst = max(worst, float(rel.max()))
    return Check("drive_roundtrip", worst <= tol, worst,
                 "JSON round trips and solver -> couplings for HS N=6, 8")


CHECKS = (check_hermiticity, check_sz_conservation, check_rotation_identities,
          check_rotation_identities_corrected, check_resonance_selectivity,
          check_drive_roundtrip)


def run_all():
    out = []
    for fn in CHECKS:
        t = time.perf_counter()
        c = fn()
        c.seconds = time.perf_counter() - t
        out.append(c)
    return out
