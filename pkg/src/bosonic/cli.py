"""Command-line front end: ``bosonic <subcommand> [options]``.

Results go to stdout as one JSON object (or CSV with ``--csv`` where a table
makes sense); diagnostics go to stderr.  Exit codes: 0 success, 1 usage or
malformed input, 2 promise violation or infeasible instance, 3 work budget
exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BudgetExceeded, Infeasible, PromiseViolated

EXIT_OK, EXIT_USAGE, EXIT_PROMISE, EXIT_BUDGET = 0, 1, 2, 3
PRECISION_ENV = "BOSONIC_PRECISION"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


@dataclass
class RunConfig:
    precision: int = 128
    tol: float = 1e-8
    term_cap: int = 10 ** 7
    fock_cap: int = 2_000_000
    sdp_iters: int = 200
    seed: int = 0
    workers: int = 1
    output: str | None = None
    fmt: str = "json"
    inputs: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("precision", "term_cap", "fock_cap", "sdp_iters", "workers"):
            if getattr(self, name) <= 0:
                raise UsageError(f"--{name.replace('_', '-')} must be positive")
        if not self.tol > 0:
            raise UsageError("--tol must be positive")


def _to_jsonable(value):
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    return value


def config_hash(command: str, args: dict, inputs: dict) -> str:
    """SHA-256 over the subcommand, its options and the bytes of every input file."""
    blob = json.dumps({"command": command, "args": _to_jsonable(args), "inputs": inputs},
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _read_json(path: str, cfg: RunConfig):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None
    cfg.inputs[path] = hashlib.sha256(raw).hexdigest()
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}") from None


def _load(path, cfg, loader, what):
    obj = _read_json(path, cfg)
    try:
        return loader(obj)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{path}: bad {what}: {exc}") from None


def _load_poly(path, cfg):
    from .polyham import poly_from_json
    return _load(path, cfg, poly_from_json, "NormalPoly")


def _load_matrix(path, cfg):
    def parse(obj):
        data = obj["matrix"] if isinstance(obj, dict) else obj
        M = np.asarray(data, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {M.shape}")
        return M
    return _load(path, cfg, parse, "matrix")


def _occupation(text: str):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"occupation must be comma-separated integers, got {text!r}") from None


# ------------------------------------------------------------------ commands

def cmd_moments(args, cfg):
    from .coeff import format_exact
    from .polyham import vacuum_moment
    value = vacuum_moment(args.k, args.l)
    z = complex(value)
    return {"k": args.k, "l": args.l, "exact": format_exact(value),
            "value_re": z.real, "value_im": z.imag}


def cmd_simulate_gaussian(args, cfg):
    from .gaussian import GaussianCircuit, energy, energy_bound, run_circuit
    c = _load(args.circuit, cfg, GaussianCircuit.from_json, "GaussianCircuit")
    state = run_circuit(c)
    return {"modes": c.modes, "mean": state.mean, "covariance": state.cov,
            "energy": energy(state), "energy_bound": energy_bound(c, args.grid)}


def cmd_gausim_decide(args, cfg):
    from .gaussian import GaussianCircuit, decide_gausim, output_distribution, run_circuit
    c = _load(args.circuit, cfg, GaussianCircuit.from_json, "GaussianCircuit")
    mean, var = output_distribution(run_circuit(c))
    answer = decide_gausim(c, args.a, args.b)
    return {"answer": answer, "mean": mean, "variance": var}


def cmd_reduce_matinv(args, cfg):
    from . import reductions as red
    from .gaussian import GaussianCircuit
    c = _load(args.circuit, cfg, GaussianCircuit.from_json, "GaussianCircuit")
    h, k = red.choose_parameters(c, args.eps)
    system = red.encode_linear_system(c, h, k, max_unknowns=cfg.fock_cap)
    sol = red.solve(system)
    ref = red.reference_trajectory(c, system)
    decoded = system.decode(sol)
    out = {"h": h, "order": k, "steps": system.steps, "unknowns": int(system.A.shape[0]),
           "max_error": float(np.abs(decoded - ref).max()), "final_mean": decoded[-1]}
    if args.kappa:
        kappa, ok = red.condition_estimate(system)
        out.update(kappa=kappa, kappa_converged=ok)
    return out


def cmd_invert_via_gaussian(args, cfg):
    from .reductions import InversionJob, invert_matrix_via_gaussian, invert_via_gaussian
    A = _load_matrix(args.matrix, cfg)
    if (args.i is None) != (args.j is None):
        raise UsageError("give both --i and --j, or neither")
    if args.i is not None:
        job = InversionJob(A, args.i, args.j, args.delta)
        return {"i": args.i, "j": args.j, "value": invert_via_gaussian(job),
                "kappa": job.kappa, "chunks": job.chunks}
    inv = invert_matrix_via_gaussian(A, args.delta)
    return {"inverse": inv, "max_deviation": float(np.abs(inv - np.linalg.inv(A)).max())}


def _boson_circuit(path, cfg):
    from .fock import BosonCircuit
    return _load(path, cfg, BosonCircuit.from_json, "BosonCircuit")


def cmd_simulate_fock(args, cfg):
    from .fock import choose_cutoff, number_distribution, simulate
    c = _boson_circuit(args.circuit, cfg)
    if args.cutoff is not None:
        psi = simulate(c, args.cutoff)
        out = {"cutoff": args.cutoff}
    else:
        choice = choose_cutoff(c, args.eps, max_dim=cfg.fock_cap)
        psi = choice.state
        out = {"cutoff": choice.cutoff, "energy_bound": choice.energy_bound,
               "certificate": choice.certificate, "tv_change": choice.tv_change}
    out.update(norm=psi.norm(), energy=psi.energy(), error_bound=psi.error_bound,
               number_distribution=number_distribution(psi, args.mode))
    return out


def cmd_amplitude(args, cfg):
    from .fock import amplitude_feynman, amplitude_matrix_product
    c = _boson_circuit(args.circuit, cfg)
    out_occ = _occupation(args.out_occ)
    in_occ = _occupation(args.in_occ) if args.in_occ else (0,) * c.modes
    if len(out_occ) != c.modes or len(in_occ) != c.modes:
        raise UsageError(f"occupations must have {c.modes} entries")
    if args.method == "feynman":
        amp = amplitude_feynman(c, out_occ, in_occ, args.cutoff, budget=cfg.term_cap)
    else:
        amp = amplitude_matrix_product(c, out_occ, in_occ, args.cutoff)
    return {"amplitude": amp, "probability": abs(amp) ** 2, "method": args.method}


def cmd_expval_heisenberg(args, cfg):
    from .coeff import Exact, format_exact
    from .heisenberg import SymbolicObservable, expval_boson_circuit
    c = _boson_circuit(args.circuit, cfg)
    kind = "float" if args.float else "exact"
    if args.observable == "X":
        obs = SymbolicObservable.X(args.mode, c.modes, kind=kind)
    elif args.observable == "P":
        obs = SymbolicObservable.P(args.mode, c.modes, kind=kind)
    else:
        obs = SymbolicObservable.number(c.modes, kind=kind)
    bits = [int(b) for b in args.bits] if args.bits else None
    value, sign, profile = expval_boson_circuit(c, obs, bits, kind, budget=cfg.term_cap)
    out = {"value_re": float(complex(value).real), "value_im": float(complex(value).imag),
           "sign": sign, "degree_profile": profile}
    if isinstance(value, Exact):
        out["exact"] = format_exact(value)
    return out


def cmd_ground_gaussian(args, cfg):
    from .groundstate import QuadLadderHam, gaussian_ground_energy
    H = _load_poly(args.ham, cfg)
    try:
        h = QuadLadderHam.from_poly(H)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    g = gaussian_ground_energy(h, tol=cfg.tol, method=args.method)
    return {"energy": g.energy, "method": g.method, "gap": g.gap,
            "covariance": g.covariance, "mean": g.mean}


def cmd_sos_check(args, cfg):
    from .coeff import format_exact
    from .groundstate import sos_witness
    H = _load_poly(args.ham, cfg)
    w = sos_witness(H, tol=cfg.tol)
    if w is None:
        raise Infeasible("no sum-of-squares certificate found (this proves nothing)")
    return {"shift": format_exact(w.shift), "shift_float": float(complex(w.shift).real),
            "squares": len(w.squares), "weights": [str(v) for v in w.weights]}


def cmd_copositivity(args, cfg):
    from .coeff import format_exact
    from .groundstate import copositivity_gadget, fock_box_min
    M = _load_matrix(args.matrix, cfg)
    if not np.allclose(M, M.T):
        raise UsageError("copositivity needs a symmetric matrix")
    H = copositivity_gadget(M.tolist())
    if (args.box + 1) ** len(M) > cfg.fock_cap:
        raise BudgetExceeded(f"box of {(args.box + 1) ** len(M)} points exceeds the Fock cap")
    value, arg = fock_box_min(H, args.box)
    low = float(complex(value).real)
    return {"box": args.box, "min": format_exact(value), "min_float": low, "argmin": arg,
            "nonnegative_on_box": low >= 0}


def cmd_stellar_optimize(args, cfg):
    from .stellar import optimize_over_stellar, param_bounds_from_energy
    H = _load_poly(args.ham, cfg)
    opt = optimize_over_stellar(H, args.r, args.energy_cap, restarts=args.restarts,
                                seed=cfg.seed, workers=cfg.workers)
    caps = param_bounds_from_energy(args.r, args.energy_cap)
    return {"energy": opt.energy, "witness": opt.witness.to_json(),
            "caps": {"xi_max": caps.xi_max, "disp_max": caps.disp_max},
            "evaluations": len(opt.history)}


def cmd_stellar_verify(args, cfg):
    from .stellar import MalformedWitness, StellarWitness, verify_witness
    H = _load_poly(args.ham, cfg)
    w = _load(args.witness, cfg, StellarWitness.from_json, "stellar witness")
    try:
        verdict = verify_witness(H, w, args.a, args.b, energy_cap=args.energy_cap, tol=cfg.tol)
    except MalformedWitness as exc:
        raise UsageError(f"{args.witness}: {exc}") from None
    if verdict.value is not None and args.a + cfg.tol < verdict.value < args.b:
        raise PromiseViolated(f"witness energy {verdict.value:.6g} lies inside ({args.a}, {args.b})")
    return {"verdict": str(verdict), "value": verdict.value, "reason": verdict.reason}


def cmd_conjecture_scan(args, cfg):
    from .stellar import conjecture_scan, scan_to_csv
    res = conjecture_scan(args.rmax, args.rmin, workers=cfg.workers, r_cap=args.rcap)
    if args.out:
        scan_to_csv(res, args.out)
    if cfg.fmt == "csv":
        buf = io.StringIO()
        scan_to_csv(res, buf)
        return buf.getvalue()
    return {"rows": len(res.rows), "slope": res.slope, "intercept": res.intercept,
            "r_squared": res.r_squared, "min_r_times_f": res.min_r_times_f,
            "min_f": min(row["f"] for row in res.rows), "csv": args.out}


# ------------------------------------------------------------------ parser

COMMANDS = {}


def _command(name, func, help_text):
    COMMANDS[name] = (func, help_text)


def build_parser() -> argparse.ArgumentParser:
    default_prec = os.environ.get(PRECISION_ENV, "128")
    parser = _Parser(prog="bosonic", description="Bosonic circuit simulation and ground-energy tools.")
    parser.add_argument("--version", action="version", version=f"bosonic {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--precision", type=int, default=int(default_prec),
                        help=f"working precision in bits (env {PRECISION_ENV})")
    common.add_argument("--tol", type=float, default=1e-8)
    common.add_argument("--term-cap", type=int, default=10 ** 7)
    common.add_argument("--fock-cap", type=int, default=2_000_000)
    common.add_argument("--sdp-iters", type=int, default=200)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--output", "-o", help="write the result here instead of stdout")
    fmt = common.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="fmt", action="store_const", const="json", default="json")
    fmt.add_argument("--csv", dest="fmt", action="store_const", const="csv")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help_text):
        _command(name, func, help_text)
        return sub.add_parser(name, help=help_text, parents=[common])

    p = add("moments", cmd_moments, "exact vacuum moment <0|X^k P^l|0>")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--l", type=int, default=0)

    p = add("simulate-gaussian", cmd_simulate_gaussian, "phase-space simulation of a Gaussian circuit")
    p.add_argument("--circuit", required=True)
    p.add_argument("--grid", type=int, default=64)

    p = add("gausim-decide", cmd_gausim_decide, "decide whether the first-mode mean is >= b or <= a")
    p.add_argument("--circuit", required=True)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)

    p = add("reduce-matinv", cmd_reduce_matinv, "encode a Gaussian circuit as a linear system")
    p.add_argument("--circuit", required=True)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--kappa", action="store_true", help="also estimate the condition number")

    p = add("invert-via-gaussian", cmd_invert_via_gaussian, "matrix inverse entries from passive dynamics")
    p.add_argument("--matrix", required=True)
    p.add_argument("--delta", type=float, default=0.02)
    p.add_argument("--i", type=int)
    p.add_argument("--j", type=int)

    p = add("simulate-fock", cmd_simulate_fock, "truncated Fock simulation with a cutoff certificate")
    p.add_argument("--circuit", required=True)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--cutoff", type=int, help="fixed cutoff (skips the certificate search)")
    p.add_argument("--mode", type=int, default=0)

    p = add("amplitude", cmd_amplitude, "transition amplitude <out|U|in>")
    p.add_argument("--circuit", required=True)
    p.add_argument("--out-occ", required=True, help="comma-separated output occupation")
    p.add_argument("--in-occ", help="input occupation (vacuum by default)")
    p.add_argument("--cutoff", type=int, default=8)
    p.add_argument("--method", choices=("matrix", "feynman"), default="matrix")

    p = add("expval-heisenberg", cmd_expval_heisenberg, "symbolic Heisenberg-picture expectation value")
    p.add_argument("--circuit", required=True)
    p.add_argument("--observable", choices=("X", "P", "N"), default="X")
    p.add_argument("--mode", type=int, default=0)
    p.add_argument("--bits", help="input bit string")
    p.add_argument("--float", action="store_true", help="floating coefficients instead of exact")

    p = add("ground-gaussian", cmd_ground_gaussian, "ground energy of a quadratic Hamiltonian")
    p.add_argument("--ham", required=True)
    p.add_argument("--method", choices=("auto", "reduced", "covariance"), default="auto")

    p = add("sos-check", cmd_sos_check, "sum-of-squares lower bound for a degree-4 Hamiltonian")
    p.add_argument("--ham", required=True)

    p = add("copositivity", cmd_copositivity, "number-diagonal gadget minimum over a Fock box")
    p.add_argument("--matrix", required=True)
    p.add_argument("--box", type=int, default=10)

    p = add("stellar-optimize", cmd_stellar_optimize, "search bounded-rank states for low energy")
    p.add_argument("--ham", required=True)
    p.add_argument("--r", type=int, default=0)
    p.add_argument("--energy-cap", type=float, required=True)
    p.add_argument("--restarts", type=int, default=4)

    p = add("stellar-verify", cmd_stellar_verify, "check a bounded-rank witness against thresholds")
    p.add_argument("--ham", required=True)
    p.add_argument("--witness", required=True)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--energy-cap", type=float)

    p = add("conjecture-scan", cmd_conjecture_scan, "minimum of the shifted projected X^2 per rank")
    p.add_argument("--rmax", type=int, default=200)
    p.add_argument("--rmin", type=int, default=1)
    p.add_argument("--rcap", type=int, default=2000)
    p.add_argument("--out", help="CSV path")
    return parser


def run(argv) -> tuple[int, str, str | None]:
    """Dispatch ``argv``; return the exit code, the result text and the output path."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise UsageError("missing subcommand")
    cfg = RunConfig(args.precision, args.tol, args.term_cap, args.fock_cap, args.sdp_iters,
                    args.seed, args.workers, args.output, args.fmt)
    func, _ = COMMANDS[args.command]
    result = func(args, cfg)
    if isinstance(result, str):
        return EXIT_OK, result, cfg.output
    # the worker count never changes a result, so it stays out of the hash
    opts = {k: v for k, v in vars(args).items() if k not in ("command", "output", "workers")}
    doc = _to_jsonable(result)
    doc.update(tool="bosonic", version=__version__, command=args.command, seed=cfg.seed,
               config_hash=config_hash(args.command, opts, cfg.inputs))
    return EXIT_OK, json.dumps(doc, sort_keys=True, indent=2) + "\n", cfg.output


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        code, text, out = run(argv)
    except SystemExit as exc:          # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"bosonic: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PromiseViolated, Infeasible) as exc:
        print(f"bosonic: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PROMISE
    except BudgetExceeded as exc:
        print(f"bosonic: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ValueError as exc:
        print(f"bosonic: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
