"""Command-line entry point: ``cutkit <extent|spacecut|hamsim|timecut|verify>``.

Results are written as one CSV row (or a JSON object) to ``--out`` or stdout.
Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 sampler retry cap exhausted.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import config as cfg
from . import decomp, hamsim, spacecut, timecut, verify
from .errors import ConfigError, CutkitError, NumericalFailure, SamplerFailure

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_SAMPLER = 0, 1, 2, 3

HAMSIM_COLUMNS = ["mean", "variance", "trials", "phi", "eta", "r", "t", "epsilon", "seed"]
TIMECUT_COLUMNS = ["mean", "variance", "trials", "one_norm", "dA", "bound"]
SPACECUT_COLUMNS = ["mean", "variance", "std_error", "trials", "phi", "seed"]


def _common(suppress: bool) -> argparse.ArgumentParser:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    p.add_argument("--seed", type=int, default=d(None), help="master seed (default 0)")
    p.add_argument("--trials", type=int, default=d(None), help="number of Monte Carlo trials")
    p.add_argument("--out", default=d(None), help="write results here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default=d(None), help="result format (default csv)")
    p.add_argument("--dump-circuits", nargs="?", const="-", default=d(None), metavar="PATH",
                   help="write sampled circuits (stderr when no path is given)")
    p.add_argument("--threads", type=int, default=d(None), help="worker threads (default: all cores)")
    return p


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="cutkit", parents=[_common(True)], allow_abbrev=False,
                                  description="Circuit cutting by local unitary decompositions.")
    sub = top.add_subparsers(dest="command", required=True)
    common = _common(True)

    p = sub.add_parser("extent", parents=[common], allow_abbrev=False,
                       help="product extent and Choi robustness of a gate")
    p.add_argument("spec", nargs="?", help="unitary spec, e.g. cnot, zz(pi/8), cnot^3, 'circuit: h 0; cnot 0 1'")
    p.add_argument("--gate", help="same as the positional spec")
    p.add_argument("--na", type=int, help="qubits on side A for gate-list specs")

    p = sub.add_parser("spacecut", parents=[common], allow_abbrev=False,
                       help="estimate through a space-like cut")
    p.add_argument("config")
    p.add_argument("--mode", choices=("sampled", "conditional"))

    p = sub.add_parser("hamsim", parents=[common], allow_abbrev=False,
                       help="clustered Hamiltonian simulation")
    p.add_argument("config", help="Hamiltonian file or key=value experiment file")
    p.add_argument("--t", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--observable")
    p.add_argument("--state")
    p.add_argument("--r", type=int)
    p.add_argument("--r-strategy", choices=("global", "commutator", "dense"))
    p.add_argument("--retry-cap", type=int)
    p.add_argument("--mode", choices=("sampled", "conditional"))

    p = sub.add_parser("timecut", parents=[common], allow_abbrev=False,
                       help="estimate through a time-like wire cut")
    p.add_argument("config", nargs="?")
    p.add_argument("--qubits", type=int)
    p.add_argument("--state")
    p.add_argument("--cut-wires")
    p.add_argument("--observable")
    p.add_argument("--mode", choices=("sampled", "analytic"))

    p = sub.add_parser("verify", parents=[common], allow_abbrev=False,
                       help="run the oracle audit suite")
    p.add_argument("--junit", help="JUnit XML report path")
    return top


# ---- output --------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _render(rows: list[dict], columns: list[str], fmt: str) -> str:
    if fmt == "json":
        clean = [{k: (float(r[k]) if isinstance(r[k], np.floating) else r[k]) for k in columns} for r in rows]
        return json.dumps(clean[0] if len(clean) == 1 else clean, indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in columns])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dump(text: str, target: str | None) -> None:
    if target is None:
        return
    if target == "-":
        sys.stderr.write(text)
    else:
        Path(target).write_text(text)


def _opt(args, name, default=None):
    v = getattr(args, name, None)
    return default if v is None else v


def _pick(args, name: str, conf: cfg.ExperimentConfig | None, key: str, fn, default):
    """CLI flag beats config key beats default."""
    v = getattr(args, name, None)
    if v is not None:
        return v
    if conf is not None:
        return conf.convert(key, fn, default)
    return default


def _checked(key: str, fn, text: str, source: str = "command line"):
    try:
        return fn(text)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{key}: {exc}", None, source) from None


# ---- subcommands ---------------------------------------------------------------


def cmd_extent(args) -> int:
    spec = args.gate or args.spec
    if not spec:
        raise ConfigError("extent needs a unitary spec (positional or --gate)")
    u = _checked("unitary", lambda s: cfg.parse_unitary(s, args.na), spec)
    res = decomp.product_extent_schmidt(u.matrix, u.shape, seed=_opt(args, "seed", 0))
    rc = decomp.choi_robustness(u.matrix, u.shape)
    if _opt(args, "format", "csv") == "json":
        _emit(json.dumps({"unitary": u.label, "xi": res.value, "Rc": rc, "certified": res.certified}) + "\n",
              _opt(args, "out"))
    else:
        _emit(f"xi={res.value:.12g} Rc={rc:.12g} certified={str(res.certified).lower()}\n", _opt(args, "out"))
    if _opt(args, "dump_circuits") is not None:
        cert = res.certificate
        lines = [f"# term {k} c={c:.12g}" for k, c in enumerate(cert.coeffs)]
        _dump("\n".join(lines) + "\n", args.dump_circuits)
    return EXIT_OK


def _decomposition(u: cfg.UnitarySpec, kind: str, seed: int) -> decomp.LocalDecomposition:
    if kind == "pauli":
        return decomp.pauli_decomposition(u.matrix, u.shape)
    if kind == "schmidt":
        return decomp.product_extent_schmidt(u.matrix, u.shape, seed=seed).certificate
    raise ConfigError(f"unknown decomposition {kind!r} (pauli or schmidt)")


def cmd_spacecut(args) -> int:
    conf = cfg.load_config(args.config)
    if conf.kind != "spacecut":
        raise ConfigError(f"expected kind = spacecut, got {conf.kind}", conf.lines.get("kind"), conf.source)
    u = conf.convert("gate", cfg.parse_unitary)
    if u is None:
        raise ConfigError("missing key 'gate'", None, conf.source)
    na = u.shape.dim_a.bit_length() - 1
    nb = u.shape.dim_b.bit_length() - 1
    a_wires = conf.convert("a_wires", cfg.parse_wires, list(range(na)))
    b_wires = conf.convert("b_wires", cfg.parse_wires, list(range(na, na + nb)))
    n = conf.convert("qubits", int, max(a_wires + b_wires) + 1)
    layout = spacecut.CutLayout(tuple(a_wires), tuple(b_wires), n)
    try:
        layout.check(u.shape)
    except ValueError as exc:
        raise ConfigError(str(exc), conf.lines.get("a_wires"), conf.source) from None
    state = conf.convert("state", lambda s: cfg.parse_state(s, n), cfg.parse_state("0" * n, n))
    obs = conf.convert("observable", lambda s: cfg.parse_observable(s, n))
    if obs is None:
        raise ConfigError("missing key 'observable'", None, conf.source)
    seed = _pick(args, "seed", conf, "seed", int, 0)
    trials = _pick(args, "trials", conf, "trials", int, 100000)
    mode = _pick(args, "mode", conf, "mode", str, "sampled")
    g = _decomposition(u, conf.get("decomposition", "schmidt"), seed)
    est = spacecut.estimate(g, u.shape, state, obs, trials, seed=seed, layout=layout, mode=mode,
                            threads=_opt(args, "threads"))
    row = {"mean": est.mean, "variance": est.variance, "std_error": est.std_error, "trials": est.trials,
           "phi": est.one_norm, "seed": seed}
    _emit(_render([row], SPACECUT_COLUMNS, _opt(args, "format", "csv")), _opt(args, "out"))
    if _opt(args, "dump_circuits") is not None:
        blocks = []
        for (i, j, gg), p in spacecut.setting_pmf(g).items():
            if p > 0:
                circ = spacecut.build_circuit(g, spacecut.SettingSample(i, j, gg), u.shape, layout)
                blocks.append(f"# setting i={i} j={j} g={gg} p={p:.12g}\n{circ.dump()}\n")
        _dump("".join(blocks), args.dump_circuits)
    return EXIT_OK


def cmd_hamsim(args) -> int:
    path = Path(args.config)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(exc), None, str(path)) from None
    conf = None
    if cfg.looks_like_hamiltonian(text):
        ham = hamsim.parse_hamiltonian(text, str(path))
    else:
        conf = cfg.parse_config(text, str(path))
        if conf.kind != "hamsim":
            raise ConfigError(f"expected kind = hamsim, got {conf.kind}", conf.lines.get("kind"), conf.source)
        ham_path = conf.require("hamiltonian")
        ham = hamsim.load_hamiltonian(path.parent / ham_path)
    n = ham.n_qubits
    t = _pick(args, "t", conf, "t", float, 1.0)
    eps = _pick(args, "eps", conf, "eps", float, 0.05)
    if t < 0 or eps <= 0:
        raise ConfigError("need t >= 0 and eps > 0")
    obs_spec = _pick(args, "observable", conf, "observable", str, "Z@0")
    state_spec = _pick(args, "state", conf, "state", str, "0" * n)
    obs = _checked("observable", lambda s: cfg.parse_observable(s, n), obs_spec)
    state = _checked("state", lambda s: cfg.parse_state(s, n), state_spec)
    seed = _pick(args, "seed", conf, "seed", int, 0)
    trials = _pick(args, "trials", conf, "trials", int, None)
    r = _pick(args, "r", conf, "r", int, None)
    strategy = _pick(args, "r_strategy", conf, "r_strategy", str, "global")
    retry_cap = _pick(args, "retry_cap", conf, "retry_cap", int, 64)
    mode = _pick(args, "mode", conf, "mode", str, "sampled")
    est, plan = hamsim.hamsim_estimate(ham, state, obs, t, eps, trials=trials, seed=seed, r=r,
                                       r_strategy=strategy, retry_cap=retry_cap, mode=mode,
                                       threads=_opt(args, "threads"))
    row = {"mean": est.mean, "variance": est.variance, "trials": est.trials, "phi": plan.phi, "eta": ham.eta,
           "r": plan.r, "t": t, "epsilon": eps, "seed": seed}
    _emit(_render([row], HAMSIM_COLUMNS, _opt(args, "format", "csv")), _opt(args, "out"))
    if _opt(args, "dump_circuits") is not None:
        rng = np.random.Generator(np.random.PCG64(seed))
        blocks = []
        for k in range(4):
            s = hamsim.sample_plan_setting(plan, rng)
            blocks.append(f"# sample {k} g={s.g}\n{hamsim.assemble_local_circuits(plan, s).dump()}\n")
        _dump("".join(blocks), args.dump_circuits)
    return EXIT_OK


def cmd_timecut(args) -> int:
    conf = cfg.load_config(args.config) if args.config else None
    if conf is not None and conf.kind != "timecut":
        raise ConfigError(f"expected kind = timecut, got {conf.kind}", conf.lines.get("kind"), conf.source)
    n = _pick(args, "qubits", conf, "qubits", int, None)
    if n is None:
        raise ConfigError("number of qubits not given ('qubits' key or --qubits)")
    state = _checked("state", lambda s: cfg.parse_state(s, n), _pick(args, "state", conf, "state", str, "0" * n))
    wires_txt = _pick(args, "cut_wires", conf, "cut_wires", str, None)
    if wires_txt is None:
        raise ConfigError("cut wires not given ('cut_wires' key or --cut-wires)")
    wires = _checked("cut_wires", cfg.parse_wires, wires_txt)
    obs_spec = _pick(args, "observable", conf, "observable", str, None)
    if obs_spec is None:
        raise ConfigError("observable not given ('observable' key or --observable)")
    obs = _checked("observable", lambda s: cfg.parse_observable(s, n), obs_spec)
    seed = _pick(args, "seed", conf, "seed", int, 0)
    trials = _pick(args, "trials", conf, "trials", int, 100000)
    mode = _pick(args, "mode", conf, "mode", str, "sampled")
    try:
        est = timecut.timecut_estimate(state, wires, obs, trials, seed=seed, mode=mode,
                                       threads=_opt(args, "threads"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _emit(_render([est.as_row()], TIMECUT_COLUMNS, _opt(args, "format", "csv")), _opt(args, "out"))
    return EXIT_OK


def cmd_verify(args) -> int:
    reports = verify.run_audit(seed=_opt(args, "seed", 0))
    rows = [{"name": r.name, "computed": r.computed, "oracle": r.oracle, "tolerance": r.tolerance,
             "relation": r.relation, "passed": r.passed} for r in reports]
    out = _opt(args, "out")
    if out and _opt(args, "format", "csv") == "csv":
        verify.write_csv(reports, out)
    else:
        _emit(_render(rows, ["name", "computed", "oracle", "tolerance", "relation", "passed"],
                      _opt(args, "format", "csv")), out)
    if args.junit:
        verify.write_junit(reports, args.junit)
    failed = [r.name for r in reports if not r.passed]
    for name in failed:
        sys.stderr.write(f"FAIL {name}\n")
    sys.stderr.write(f"{len(reports) - len(failed)}/{len(reports)} oracle checks passed\n")
    return EXIT_OK if not failed else EXIT_NUMERICAL


COMMANDS = {"extent": cmd_extent, "spacecut": cmd_spacecut, "hamsim": cmd_hamsim, "timecut": cmd_timecut,
            "verify": cmd_verify}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except SamplerFailure as exc:
        sys.stderr.write(f"sampler failure: {exc}\n")
        return EXIT_SAMPLER
    except (NumericalFailure, ArithmeticError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except CutkitError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
