"""Site geometries and ground-state energy-shift landscapes.

Positions are in units of the lattice constant d.  Shifts are in units of
the 1D gradient step delta, or of B2 for the 2D irrational gradient.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0


class ShiftCollisionError(ValueError):
    """Raised when two sites receive the same shift within tolerance."""

    def __init__(self, pairs):
        self.pairs = list(pairs)
        head = ", ".join(f"{a}~{b}" for a, b in self.pairs[:10])
        more = "" if len(self.pairs) <= 10 else f" (+{len(self.pairs) - 10} more)"
        super().__init__(f"colliding site shifts: {head}{more}")


@dataclass(frozen=True)
class Site:
    index: int
    position: tuple
    shift: float


@dataclass(frozen=True)
class Lattice:
    """Immutable collection of sites.

    Attributes
    ----------
    dimension : int
        1 or 2.
    sites : tuple of Site
        Ordered row-major (index = n_y * nx + n_x in 2D).
    bravais : tuple of tuple
        Basis vectors in units of d.
    gradient_spec : dict
        How the shifts were generated; ``unit`` is the shift scale
        (delta or B2) used for default tolerances.
    """

    dimension: int
    sites: tuple
    bravais: tuple
    gradient_spec: dict = field(default_factory=dict)

    def __post_init__(self):
        idx = [s.index for s in self.sites]
        if idx != list(range(len(idx))):
            raise ValueError("site indices must be contiguous from 0")
        if len({tuple(s.position) for s in self.sites}) != len(self.sites):
            raise ValueError("site positions must be unique")

    @property
    def N(self):
        return len(self.sites)

    @property
    def positions(self):
        return np.array([s.position for s in self.sites], dtype=float).reshape(self.N, self.dimension)

    @property
    def shifts(self):
        return np.array([s.shift for s in self.sites], dtype=float)

    @property
    def unit(self):
        return float(self.gradient_spec.get("unit", 1.0))

    def distances(self):
        r = self.positions
        return np.linalg.norm(r[:, None, :] - r[None, :, :], axis=-1)

    def with_offset(self, c):
        """Same lattice with every shift moved by the constant ``c``."""
        sites = tuple(Site(s.index, s.position, s.shift + c) for s in self.sites)
        return Lattice(self.dimension, sites, self.bravais, dict(self.gradient_spec))

    def to_json(self):
        return json.dumps({
            "dimension": self.dimension,
            "bravais": [list(v) for v in self.bravais],
            "gradient_spec": self.gradient_spec,
            "sites": [{"index": s.index, "position": list(s.position), "shift": s.shift}
                      for s in self.sites],
        }, indent=2)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        sites = tuple(Site(int(s["index"]), tuple(s["position"]), float(s["shift"]))
                      for s in d["sites"])
        return cls(int(d["dimension"]), sites, tuple(tuple(v) for v in d["bravais"]),
                   d.get("gradient_spec", {}))


def build_chain(N, delta=1.0):
    """Linear chain with shifts n * delta."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if not delta > 0:
        raise ValueError("delta must be > 0")
    sites = tuple(Site(n, (n,), n * float(delta)) for n in range(N))
    return Lattice(1, sites, ((1,),), {"kind": "linear", "delta": float(delta), "unit": float(delta)})


def build_square(nx, ny, B2=1.0, q=GOLDEN, tol=1e-9):
    """Square lattice with shift (n_x q + n_y) B2 at site (n_x, n_y).

    Raises ShiftCollisionError if two sites share a shift within tol * B2.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx, ny must be >= 1")
    sites = []
    for y in range(ny):
        for x in range(nx):
            sites.append(Site(y * nx + x, (x, y), (x * q + y) * float(B2)))
    w = np.array([s.shift for s in sites])
    order = np.argsort(w, kind="stable")
    gaps = np.diff(w[order])
    bad = np.nonzero(np.abs(gaps) <= tol * abs(B2))[0]
    if len(bad):
        raise ShiftCollisionError((int(order[i]), int(order[i + 1])) for i in bad)
    spec = {"kind": "irrational", "B2": float(B2), "B1": float(q * B2), "q": float(q),
            "unit": float(abs(B2))}
    return Lattice(2, tuple(sites), ((1, 0), (0, 1)), spec)


def _key(v):
    return tuple(int(round(c)) for c in v)


def separation_classes(lattice):
    """Ordered pairs (m, n), m != n, grouped by r_m - r_n."""
    r = lattice.positions
    classes = {}
    for m in range(lattice.N):
        for n in range(lattice.N):
            if m != n:
                classes.setdefault(_key(r[m] - r[n]), []).append((m, n))
    return classes


def distance_classes(lattice):
    """Unordered pairs grouped by the sorted |components| of the separation.

    On a square cluster these are the orbits of the point group, whose
    count is (n_s (n_s + 1) - 2) / 2.
    """
    r = lattice.positions
    out = {}
    for m, n in combinations(range(lattice.N), 2):
        out.setdefault(tuple(sorted(abs(c) for c in _key(r[m] - r[n]))), []).append((m, n))
    return out


@dataclass
class UniquenessReport:
    tol: float
    collisions: list

    @property
    def ok(self):
        return not self.collisions


def shift_uniqueness_check(lattice, tol=None):
    """Find separation classes whose shift differences coincide within tol.

    ``tol`` is absolute, in shift units; default 1e-9 * lattice.unit.
    """
    if tol is None:
        tol = 1e-9 * lattice.unit
    if not tol > 0:
        raise ValueError("tol must be > 0")
    w = lattice.shifts
    keys, diffs = [], []
    for key, pairs in sorted(separation_classes(lattice).items()):
        m, n = pairs[0]
        keys.append(key)
        diffs.append(w[m] - w[n])
    diffs = np.array(diffs)
    order = np.argsort(diffs, kind="stable")
    coll = []
    # sweep over sorted differences, comparing each with all neighbours inside tol
    for i in range(len(order)):
        j = i + 1
        while j < len(order) and diffs[order[j]] - diffs[order[i]] <= tol:
            a, b = keys[order[i]], keys[order[j]]
            coll.append((a, b, float(diffs[order[j]] - diffs[order[i]])))
            j += 1
    return UniquenessReport(float(tol), coll)
