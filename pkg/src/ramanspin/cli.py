"""Command-line experiment runner.

Every subcommand writes its data files and a ``manifest.json`` into the
output directory.  Exit codes: 0 ok, 1 configuration error, 2 numerical
error.  All quantities are in reduced units: Jtilde = 1, lattice
constant d = 1, gradient step delta = 1 unless a flag says otherwise.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__

UNITS = "reduced units: Jtilde = 1, lattice constant d = 1; energies of the HS chain in units of J_1"


class ConfigError(Exception):
    pass


class NumericalError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")



def _parse_eta(text):
    """'NN' or a positive exponent; integral values become int."""
    if str(text).upper() == "NN":
        return "NN"
    try:
        eta = float(text)
    except ValueError:
        raise ConfigError(f"--eta: unknown eta {text!r}, expected a positive number or NN") from None
    return int(eta) if eta.is_integer() else eta

def _fmt(x):
    return f"{float(x):.12e}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([v if isinstance(v, (int, str, np.integer)) else _fmt(v) for v in r])


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serializable: {type(o)}")


def _coupling_rows(J):
    N = J.shape[0]
    return [(m, n, J[m, n].real, J[m, n].imag) for m in range(N) for n in range(N) if J[m, n] != 0]


# ---------------------------------------------------------------------------
# subcommands

def cmd_solve_sidebands(a, out):
    from .drive import solve_sidebands_1d
    from .hamiltonian import hs_profile
    if a.model != "hs":
        raise ConfigError(f"solve-sidebands: unsupported model {a.model!r}")
    sol = solve_sidebands_1d(hs_profile(a.n, a.j0), mode=a.mode)
    (out / "drive.json").write_text(sol.drive(1.0).to_json() + "\n", encoding="utf-8")
    sol.write_trace(out / "residual_trace.csv")
    _write_csv(out / "intensity.csv", ["alpha", "X_re", "X_im", "intensity"],
               [(i, x.real, x.imag, abs(x) ** 2) for i, x in enumerate(sol.amplitudes)])
    summary = {"N": a.n, "J0": a.j0, "mode": a.mode, "residual": sol.residual,
               "total_intensity": sol.intensity}
    if a.scan:
        lo, hi, step = a.scan
        rows = []
        for N in range(lo, hi + 1, step):
            s = solve_sidebands_1d(hs_profile(N, a.j0), mode=a.mode)
            rows.append((N, s.intensity, s.residual))
        _write_csv(out / "intensity_vs_n.csv", ["N", "total_intensity", "residual"], rows)
    _write_json(out / "summary.json", summary)
    return summary


def _model_couplings(a):
    from .drive import brickwall_drive, chiral_flux_drive, coupling_matrix, solve_sidebands_1d
    from .hamiltonian import hs_profile, xxz_eta_target
    from .lattice import build_chain, build_square
    if a.model == "hs":
        lat = build_chain(a.n, 1.0)
        drive = solve_sidebands_1d(hs_profile(a.n, a.j0)).drive(1.0)
        return lat, drive, coupling_matrix(lat, drive), None
    if a.model in ("chiral-flux", "brickwall"):
        lat = build_square(a.nx, a.ny)
        if a.model == "chiral-flux":
            drive = chiral_flux_drive(a.t1, a.t2, a.t3, a.zeta, mode=a.mode)
        else:
            drive = brickwall_drive(a.t1, a.t2 if a.t2 else None)
        return lat, drive, coupling_matrix(lat, drive, pump_pairs_only=True), None
    if a.model == "xxz":
        lat = build_square(a.nx, a.ny)
        eta = _parse_eta(a.eta)
        Jxy, Jz = xxz_eta_target(lat, 1.0, eta, a.theta)
        return lat, None, 2.0 * Jxy.astype(complex), Jz
    raise ConfigError(f"build-model: unknown model {a.model!r}")


def cmd_build_model(a, out):
    from .hamiltonian import build_sector, build_xy, build_zz
    lat, drive, J, Jz = _model_couplings(a)
    (out / "lattice.json").write_text(lat.to_json() + "\n", encoding="utf-8")
    if drive is not None:
        (out / "drive.json").write_text(drive.to_json() + "\n", encoding="utf-8")
    _write_csv(out / "couplings.csv", ["m", "n", "J_re", "J_im"], _coupling_rows(J))
    if Jz is not None:
        _write_csv(out / "couplings_zz.csv", ["m", "n", "Jz_re", "Jz_im"],
                   _coupling_rows(Jz.astype(complex)))
    summary = {"model": a.model, "N": lat.N, "nonzero_couplings": int(np.count_nonzero(J))}
    if a.sector is not None:
        sec = build_sector(lat.N, a.sector)
        H = build_xy(J, sec)
        if Jz is not None:
            H = H + build_zz(Jz, sec)
        H.to_coo_csv(out / "hamiltonian_coo.csv")
        summary.update({"sector": a.sector, "dim": sec.dim,
                        "hermiticity_error": H.hermiticity_error()})
    _write_json(out / "summary.json", summary)
    return summary


def cmd_floquet_compare(a, out):
    from .floquet import hs_comparison, loglog_slope
    if a.model != "hs":
        raise ConfigError(f"floquet-compare: unsupported model {a.model!r}")
    deltas = list(a.delta_over_j)
    rows = hs_comparison(a.n, deltas, twostep=a.twostep, p_max=a.p_max, m_max=a.m_max)
    keys = ["delta_over_J1", "E0", "E1", "energy_error_1", "overlap_error_1"]
    if a.twostep:
        keys += ["E2", "energy_error_2", "overlap_error_2"]
    _write_csv(out / "floquet.csv", keys, [[r[k] for k in keys] for r in rows])
    summary = {"model": "hs", "N": a.n, "twostep": a.twostep, "m_max": a.m_max, "rows": rows}
    if len(deltas) >= 2:
        summary["slope_energy_error_1"] = loglog_slope(deltas, [r["energy_error_1"] for r in rows])
    _write_json(out / "floquet.json", summary)
    return {k: v for k, v in summary.items() if k != "rows"}


def _trotter_setup(a):
    """(segments, exact H, J) on the full space for the chosen model."""
    from .hamiltonian import (build_xy, build_zz, full_space, global_rotation, hs_target,
                              xxz_eta_target)
    from .lattice import build_chain
    N = a.n
    fs = full_space(N)
    if a.model == "hs":
        # (XX+YY)/2 in the lab, x-rotated and y-rotated frames sums to XX+YY+ZZ
        J = hs_target(N, np.sin(np.pi / N) ** 2).real
        Hxy = build_xy(J.astype(complex), fs).toarray()      # = sum J (XX+YY)/2
        Rx = global_rotation(N, "x", np.pi / 2)
        Ry = global_rotation(N, "y", np.pi / 2)
        segs = [Hxy, (Hxy, Rx), (Hxy, Ry)]
        gens = [Hxy, Rx @ Hxy @ Rx.conj().T, Ry @ Hxy @ Ry.conj().T]
        return segs, gens, sum(gens), J
    if a.model == "xxz":
        lat = build_chain(N, 1.0)
        eta = _parse_eta(a.eta)
        Jxy, Jz = xxz_eta_target(lat, 1.0, eta, a.theta)
        Hxy = build_xy(2.0 * Jxy.astype(complex), fs).toarray()
        Hzz = build_zz(Jz, fs).toarray()
        return [Hxy, Hzz], [Hxy, Hzz], Hxy + Hzz, Jxy
    raise ConfigError(f"trotter: unknown model {a.model!r}")


def cmd_trotter(a, out):
    from .evolve import expm_hermitian, trotter_bound, trotter_product
    segs, gens, H, J = _trotter_setup(a)
    U = expm_hermitian(H, a.t)
    rows = []
    for nt in a.nt:
        V = trotter_product(segs, a.t, nt)
        err = float(np.linalg.norm(V - U, 2))
        b = trotter_bound(gens[0], gens[1:], a.t, nt, J)
        rows.append((nt, a.t, err, b.exact, b.estimate))
    _write_csv(out / "trotter.csv", ["n_t", "t", "error", "bound", "estimate"], rows)
    summary = {"model": a.model, "N": a.n, "t": a.t,
               "all_within_bound": all(r[2] <= r[3] for r in rows),
               "error_ratios": [rows[i][2] / rows[i + 1][2] for i in range(len(rows) - 1)]}
    _write_json(out / "summary.json", summary)
    return summary


def cmd_bands(a, out):
    from .bands import brickwall_model, chiral_flux_flat, chiral_flux_model, summary_json, write_band_csv
    if a.model == "chiral-flux":
        if a.flat:
            model = chiral_flux_flat(a.t1, a.t3_bonds)
        else:
            model = chiral_flux_model(a.t1, a.t2, a.t3, a.phi, a.t3_bonds)
    elif a.model == "brickwall":
        model = brickwall_model(a.t1, a.t2, a.phi)
    else:
        raise ConfigError(f"bands: unknown model {a.model!r}")
    write_band_csv(out / "bands.csv", model, a.grid)
    summary = json.loads(summary_json(model, a.grid))
    _write_json(out / "bands.json", summary)
    return summary


def cmd_phase_scan(a, out):
    from .lattice import build_square
    from .phases import asymmetry, magnetization_scan, plateaus_json, staircase_cut
    lat = build_square(a.nx, a.ny)
    eta = _parse_eta(a.eta)
    theta = np.linspace(-np.pi / 2, np.pi / 2, a.n_theta)
    B = np.linspace(0.0, a.b_max, a.n_b)
    scan = magnetization_scan(lat, eta, theta, B, n_exc_max=a.n_exc_max, workers=a.workers)
    scan.write_csv(out / "magnetization.csv")
    meta = scan.metadata()
    meta.update({"asymmetry": asymmetry(scan), "nx": a.nx, "ny": a.ny,
                 "boundary": "open"})
    _write_json(out / "scan.json", meta)
    (out / "staircase.json").write_text(plateaus_json(staircase_cut(lat, eta, B)) + "\n",
                                        encoding="utf-8")
    return meta


def cmd_verify(a, out):
    from .verify import run_all
    checks = run_all()
    res = {"checks": [c.to_dict() for c in checks], "all_ok": all(c.ok for c in checks)}
    _write_json(out / "verify.json", res)
    for c in checks:
        print(f"{'PASS' if c.ok else 'FAIL'} {c.name}: {c.value:.3e} {c.detail}")
    if not res["all_ok"]:
        raise NumericalError("invariant suite: " + ", ".join(c.name for c in checks if not c.ok)
                             + " failed")
    return res


COMMANDS = {
    "solve-sidebands": cmd_solve_sidebands,
    "build-model": cmd_build_model,
    "floquet-compare": cmd_floquet_compare,
    "trotter": cmd_trotter,
    "bands": cmd_bands,
    "phase-scan": cmd_phase_scan,
    "verify": cmd_verify,
}


def _range3(text):
    try:
        parts = [int(x) for x in text.split(":")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi[:step], got {text!r}")
    if len(parts) == 2:
        parts.append(1)
    if len(parts) != 3 or parts[2] < 1 or parts[0] < 2:
        raise argparse.ArgumentTypeError(f"expected lo:hi[:step] with lo >= 2, got {text!r}")
    return tuple(parts)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser():
    p = _Parser(prog="ramanspin", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ramanspin {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--out", type=Path, default=None, help="output directory")
        return s

    s = add("solve-sidebands", "solve sideband amplitudes for a 1D coupling profile")
    s.add_argument("--model", default="hs", choices=["hs"])
    s.add_argument("--n", type=_positive_int, default=16)
    s.add_argument("--j0", type=float, default=1.0)
    s.add_argument("--mode", default="optimized", choices=["optimized", "perturbative"])
    s.add_argument("--scan", type=_range3, default=None, help="also tabulate intensity for N in lo:hi[:step]")

    s = add("build-model", "build couplings (and optionally a sector Hamiltonian)")
    s.add_argument("--model", required=True, choices=["hs", "chiral-flux", "brickwall", "xxz"])
    s.add_argument("--n", type=_positive_int, default=8)
    s.add_argument("--j0", type=float, default=1.0)
    s.add_argument("--nx", type=_positive_int, default=4)
    s.add_argument("--ny", type=_positive_int, default=4)
    s.add_argument("--t1", type=float, default=1.0)
    s.add_argument("--t2", type=float, default=0.0)
    s.add_argument("--t3", type=float, default=0.0)
    s.add_argument("--zeta", type=float, default=1.0)
    s.add_argument("--mode", default="frequency", choices=["frequency", "amplitude"])
    s.add_argument("--eta", default="3")
    s.add_argument("--theta", type=float, default=0.0)
    s.add_argument("--sector", type=int, default=None)

    s = add("floquet-compare", "compare H_0 with the Floquet effective Hamiltonians")
    s.add_argument("--model", default="hs", choices=["hs"])
    s.add_argument("--n", type=_positive_int, default=12)
    s.add_argument("--delta-over-j", type=float, nargs="+", default=[40.0])
    s.add_argument("--twostep", action="store_true")
    s.add_argument("--p-max", type=int, default=None)
    s.add_argument("--m-max", type=int, default=199)

    s = add("trotter", "stroboscopic XXZ evolution against the exact propagator")
    s.add_argument("--model", default="xxz", choices=["xxz", "hs"])
    s.add_argument("--n", type=_positive_int, default=6)
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--nt", type=_positive_int, nargs="+", default=[8, 16, 32, 64])
    s.add_argument("--eta", default="3")
    s.add_argument("--theta", type=float, default=np.pi / 4)

    s = add("bands", "band structure, flatness and Chern numbers")
    s.add_argument("--model", default="chiral-flux", choices=["chiral-flux", "brickwall"])
    s.add_argument("--flat", action="store_true")
    s.add_argument("--t1", type=float, default=1.0)
    s.add_argument("--t2", type=float, default=None)
    s.add_argument("--t3", type=float, default=0.0)
    s.add_argument("--phi", type=float, default=None)
    s.add_argument("--t3-bonds", default="axial", choices=["axial", "diagonal"])
    s.add_argument("--grid", type=_positive_int, default=64)

    s = add("phase-scan", "XXZ magnetization over (theta, B)")
    s.add_argument("--eta", default="3")
    s.add_argument("--nx", type=_positive_int, default=4)
    s.add_argument("--ny", type=_positive_int, default=4)
    s.add_argument("--n-theta", type=_positive_int, default=41)
    s.add_argument("--n-b", type=_positive_int, default=61)
    s.add_argument("--b-max", type=float, default=3.0)
    s.add_argument("--n-exc-max", type=int, default=8)
    s.add_argument("--workers", type=_positive_int, default=1)

    add("verify", "run the invariant suite")

    s = sub.add_parser("run", help="run an experiment described by a YAML config")
    s.add_argument("config", type=Path)
    return p


def _fix_defaults(a):
    # phi defaults differ per model
    if getattr(a, "command", None) == "bands" and a.phi is None and a.model == "chiral-flux":
        a.phi = np.pi / 4
    return a


def config_to_argv(cfg):
    """Translate {command, out, params} into an argv list, validating field names."""
    if not isinstance(cfg, dict):
        raise ConfigError("config: top level must be a mapping")
    unknown = set(cfg) - {"command", "out", "params"}
    if unknown:
        raise ConfigError(f"config: unknown top-level field(s) {sorted(unknown)}")
    cmd = cfg.get("command")
    if cmd not in COMMANDS:
        raise ConfigError(f"config.command: expected one of {sorted(COMMANDS)}, got {cmd!r}")
    argv = [cmd]
    if cfg.get("out") is not None:
        argv += ["--out", str(cfg["out"])]
    params = cfg.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("config.params: must be a mapping")
    sub = build_parser()._subparsers._group_actions[0].choices[cmd]
    known = {act.dest: act for act in sub._actions if act.option_strings}
    for key, val in params.items():
        dest = str(key).replace("-", "_")
        if dest not in known or dest in ("help", "out"):
            raise ConfigError(f"config.params.{key}: unknown field for {cmd}")
        act = known[dest]
        flag = act.option_strings[0]
        if isinstance(act, argparse._StoreTrueAction):
            if not isinstance(val, bool):
                raise ConfigError(f"config.params.{key}: expected true/false")
            if val:
                argv.append(flag)
        elif isinstance(val, list):
            argv += [flag] + [str(v) for v in val]
        else:
            argv += [flag, str(val)]
    return argv


def _inputs_hash(command, args):
    d = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
         if k not in ("out",)}
    blob = json.dumps({"command": command, "args": d}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest(), d


def execute(args):
    cmd = args.command
    out = args.out if args.out is not None else Path("out") / cmd
    out.mkdir(parents=True, exist_ok=True)
    import scipy
    digest, params = _inputs_hash(cmd, args)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        summary = COMMANDS[cmd](args, out)
    elapsed = time.perf_counter() - t0
    manifest = {
        "command": cmd, "params": params, "inputs_sha256": digest, "units": UNITS,
        "versions": {"ramanspin": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "timings": {"total_seconds": elapsed},
        "warnings": sorted({str(w.message) for w in caught}),
        "outputs": sorted(p.name for p in out.iterdir() if p.name != "manifest.json"),
    }
    _write_json(out / "manifest.json", manifest)
    return summary


def main(argv=None):
    from .bands import GapClosureError
    from .drive import SolverError
    from .evolve import PropagationError
    from .floquet import ParityError
    from .hamiltonian import HermiticityError
    from .lattice import ShiftCollisionError
    numerical = (SolverError, PropagationError, GapClosureError, ParityError, HermiticityError,
                 ShiftCollisionError, NumericalError, np.linalg.LinAlgError)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            import yaml
            try:
                cfg = yaml.safe_load(args.config.read_text(encoding="utf-8"))
            except OSError as exc:
                raise ConfigError(f"config: cannot read {args.config}: {exc}")
            except yaml.YAMLError as exc:
                raise ConfigError(f"config: invalid YAML: {exc}")
            args = parser.parse_args(config_to_argv(cfg))
        _fix_defaults(args)
        summary = execute(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except numerical as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.command != "verify":
        print(json.dumps(summary, indent=2, sort_keys=True, default=_json_default))
    return 0


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
