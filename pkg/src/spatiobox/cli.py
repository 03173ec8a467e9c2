"""Command-line front end.

Every subcommand prints exactly one machine-parsable summary line
(``<command> key=value ...``).  With ``--out`` the artifact is written
atomically to that path and the summary goes to stdout; without it the
artifact goes to stdout and the summary to stderr.

Exit status: 0 success, 2 ran but the verdict is negative, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import bci, corrfn, jointbox, lhv, quantum, sodbox, tolerances
from .corrfn import CorrelationFunction

EXIT_OK, EXIT_ERROR, EXIT_NEGATIVE = 0, 1, 2
DIGITS = 12


class InputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config and output


@dataclass
class RunConfig:
    seed: int = 0
    tolerances: dict[str, float] = field(default_factory=dict)
    out: str | None = None
    format: str = "json"
    format_given: bool = False

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        data = _read_json(path)
        if not isinstance(data, dict):
            raise InputError(f"{path}: config must be a JSON object")
        unknown = set(data) - {"seed", "tolerances", "out", "format"}
        if unknown:
            raise InputError(f"{path}: unknown config field(s) {sorted(unknown)}")
        cfg = cls()
        if "seed" in data:
            if not isinstance(data["seed"], int) or not 0 <= data["seed"] < 2**64:
                raise InputError(f"{path}: field 'seed' must be a 64-bit unsigned integer")
            cfg.seed = data["seed"]
        if "tolerances" in data:
            tols = data["tolerances"]
            if not isinstance(tols, dict):
                raise InputError(f"{path}: field 'tolerances' must be an object")
            for k, v in tols.items():
                if k not in tolerances.DEFAULTS:
                    raise InputError(f"{path}: field 'tolerances.{k}' is not a known tolerance")
                if not isinstance(v, (int, float)) or v < 0:
                    raise InputError(f"{path}: field 'tolerances.{k}' must be a non-negative number")
            cfg.tolerances = {k: float(v) for k, v in tols.items()}
        if "out" in data:
            cfg.out = data["out"]
        if "format" in data:
            if data["format"] not in ("json", "csv"):
                raise InputError(f"{path}: field 'format' must be 'json' or 'csv'")
            cfg.format = data["format"]
            cfg.format_given = True
        return cfg


def fmt(x: float) -> str:
    return f"{x:.{DIGITS}g}"


def _round(obj: Any) -> Any:
    if isinstance(obj, float):
        return obj if not math.isfinite(obj) else float(fmt(obj))
    if isinstance(obj, (np.floating,)):
        return _round(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _round(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(_round(obj), indent=2, sort_keys=True) + "\n"


def csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class Outcome:
    summary: dict
    artifact: str | None = None
    negative: bool = False


def _flatten(obj: Any, prefix: str = "") -> list[tuple[str, Any]]:
    if isinstance(obj, dict):
        out = []
        for k in sorted(obj):
            out.extend(_flatten(obj[k], f"{prefix}{k}."))
        return out
    if isinstance(obj, list):
        out = []
        for i, v in enumerate(obj):
            out.extend(_flatten(v, f"{prefix}{i}."))
        return out
    return [(prefix[:-1], obj)]


def convert(artifact: str, target: str) -> str:
    """Re-express a JSON artifact as ``key,value`` CSV rows, or CSV rows as a JSON list."""
    is_json = artifact.lstrip().startswith(("{", "["))
    if target == "csv" and is_json:
        rows = [(k, "null" if v is None else v) for k, v in _flatten(json.loads(artifact))]
        return csv_text(["key", "value"], rows)
    if target == "json" and not is_json:
        reader = csv.DictReader(io.StringIO(artifact))
        return dumps([{k: _number(v) for k, v in row.items()} for row in reader])
    return artifact


def _number(v: str) -> Any:
    try:
        return float(v)
    except ValueError:
        return v


def _summary_line(command: str, summary: dict) -> str:
    parts = [command]
    for k, v in summary.items():
        if isinstance(v, (bool, np.bool_)):
            v = str(bool(v)).lower()
        elif isinstance(v, (float, np.floating)):
            v = fmt(float(v))
        parts.append(f"{k}={v}")
    return " ".join(parts)


# ---------------------------------------------------------------------------
# input helpers


def _read_json(path: str) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def _load_corr(args) -> CorrelationFunction:
    if getattr(args, "scifi", False):
        return corrfn.scifi_correlation()
    if getattr(args, "werner", None) is not None:
        return quantum.QuantumBox(quantum.werner_state(args.werner)).correlation_function()
    if getattr(args, "corr", None):
        try:
            return CorrelationFunction.from_json(_read_json(args.corr))
        except InputError:
            raise
        except ValueError as exc:
            raise InputError(f"{args.corr}: {exc}") from None
    raise InputError("no correlation given: use --corr FILE, --scifi or --werner P")


def _read_csv(path: str, required: Sequence[str] | None = None) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty CSV")
    header = [h.strip() for h in rows[0]]
    for col in required or ():
        if col not in header:
            raise InputError(f"{path}: missing column '{col}'")
    data = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise InputError(f"{path}: line {i} has {len(row)} fields, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                data[i - 2, j] = float(cell)
            except ValueError:
                raise InputError(f"{path}: line {i}, field '{header[j]}': not a number ({cell!r})") from None
    return header, data


def _spin_to_two_j(spin: float) -> int:
    two_j = 2 * spin
    if abs(two_j - round(two_j)) > 1e-12 or two_j < 1:
        raise InputError(f"field 'spin': must be a positive half-integer, got {spin}")
    return int(round(two_j))


# ---------------------------------------------------------------------------
# commands


def cmd_eval(args, cfg: RunConfig) -> Outcome:
    f = _load_corr(args)
    if args.grid:
        pts = np.linspace(0.0, 2 * math.pi, args.grid)
        a, b = np.meshgrid(pts, pts, indexing="ij")
        if args.box:
            text = jointbox.grid_csv(jointbox.from_correlation(f), args.grid)
        else:
            vals = corrfn.evaluate(f, a, b)
            text = csv_text(["alpha", "beta", "C"], zip(a.ravel(), b.ravel(), vals.ravel()))
        return Outcome({"points": args.grid * args.grid}, text)
    value = float(corrfn.evaluate(f, args.alpha, args.beta))
    art = dumps({"alpha": args.alpha, "beta": args.beta, "C": value, "two_j": f.two_j})
    return Outcome({"value": value}, art)


def cmd_chsh(args, cfg: RunConfig) -> Outcome:
    f = _load_corr(args)
    if args.angles:
        value = bci.chsh_value(f, *args.angles)
        angles = list(args.angles)
    else:
        opt = bci.maximize_chsh(f)
        value, angles = opt.value, list(opt.angles)
    violated = abs(value) > 2.0
    art = dumps({"chsh": value, "angles": dict(zip(("a1", "b2", "a3", "b4"), angles)), "violated": violated})
    return Outcome({"value": value, "violated": violated}, art)


def cmd_bci(args, cfg: RunConfig) -> Outcome:
    f = _load_corr(args)
    setting = bci.ChainedSetting.build(args.n, args.theta_plus, args.theta_minus)
    rep = bci.bci_value(f, setting)
    return Outcome({"n": rep.n_settings, "lhs": rep.lhs, "bound": rep.classical_bound, "violated": rep.violated},
                   dumps(rep.to_json()), negative=not rep.violated)


def cmd_witness(args, cfg: RunConfig) -> Outcome:
    f = _load_corr(args)
    res = bci.theorem_2b_witness(f, args.theta_plus, args.theta_minus, cap=args.cap)
    rep = res.report
    return Outcome({"n": rep.n_settings, "lhs": rep.lhs, "bound": rep.classical_bound,
                    "violated": rep.violated, "status": res.status},
                   dumps(res.to_json()), negative=not rep.violated)


def cmd_protocol(args, cfg: RunConfig) -> Outcome:
    if args.box:
        try:
            box = jointbox.JointBox.from_json(_read_json(args.box))
        except InputError:
            raise
        except ValueError as exc:
            raise InputError(f"{args.box}: {exc}") from None
        two_j = box.two_j
    elif args.werner is not None:
        box = quantum.QuantumBox(quantum.werner_state(args.werner))
        two_j = quantum.POLARIZER_TWO_J
    else:
        f = _load_corr(args)
        box, two_j = jointbox.from_correlation(f), f.two_j
    if args.spin is not None:
        two_j = _spin_to_two_j(args.spin)
    res = bci.simulate_witness_protocol(
        box, args.theta_plus, args.theta_minus, args.shots, max(two_j, 1),
        seed=cfg.seed, workers=args.workers, flip_b=args.flip_b, sigmas=args.sigmas,
    )
    return Outcome({"r_plus": res.r_plus, "r_minus": res.r_minus, "witnessed": res.witnessed},
                   dumps(res.to_json()), negative=not res.witnessed)


def cmd_lhv(args, cfg: RunConfig) -> Outcome:
    action = args.action
    if action == "gamma":
        g = lhv.gamma_n(args.n)
        art = {"N": args.n, "gamma": g, "xi": lhv.optimal_window(args.n)}
        if args.n >= 4:
            art["lower_bound"] = lhv.gamma_lower_bound(args.n)
        return Outcome({"gamma": g}, dumps(art))
    if action == "gamma-j":
        two_j = _spin_to_two_j(args.spin)
        g = lhv.gamma_j(two_j)
        return Outcome({"gamma": g}, dumps({"spin": two_j / 2, "N": lhv.max_terms(two_j), "gamma": g}))
    if action == "squarewave":
        model = lhv.build_squarewave_lhv(args.m, args.n)
        th = np.linspace(-math.pi, math.pi, args.points)
        text = csv_text(["theta", "C"], zip(th, np.atleast_1d(model.relational_value(th))))
        return Outcome({"C_plus": model.relational_value(0.0), "C_minus": model.relational_value(model.theta_minus)}, text)
    f = _load_corr(args)
    if action == "check":
        cert = lhv.theorem_2a_check(f, args.mode)
        art = {"verdict": cert.verdict, "deviation": cert.deviation, "bound": cert.bound,
               "gamma": cert.gamma, "constant": cert.constant, "n_terms": cert.n_terms, "mode": cert.mode}
        return Outcome({"verdict": cert.verdict, "deviation": cert.deviation, "bound": cert.bound},
                       dumps(art), negative=not cert.passed)
    if action == "build" and f.constant == 0.0 and args.xi is not None:
        model = lhv.build_lhv(f, args.xi)
        return Outcome({"n_terms": model.n_terms, "scale": model.scale}, dumps(model.to_json()))
    cert = lhv.theorem_2a_check(f, args.mode)
    if not cert.passed:
        print(f"no locality certificate: deviation {fmt(cert.deviation)} > bound {fmt(cert.bound)}", file=sys.stderr)
        return Outcome({"verdict": cert.verdict, "deviation": cert.deviation, "bound": cert.bound}, None, negative=True)
    if action == "build":
        real = lhv.realize_lhv(f, args.mode)
        art = {"weight": real.weight, "sign": real.sign,
               "model": None if real.model is None else real.model.to_json()}
        scale = real.model.scale if real.model else 0.0
        return Outcome({"n_terms": real.model.n_terms if real.model else 0, "scale": scale}, dumps(art))
    if action == "sample":
        real = lhv.realize_lhv(f, args.mode)
        if args.shots < 2:
            raise InputError("field 'shots': need at least 2 samples for a standard error")
        pairs = args.angles or [[0.0, 0.0]]
        rows = []
        for i, (a, b) in enumerate(pairs):
            est = lhv.empirical_correlation(real, a, b, args.shots, seed=cfg.seed + i, workers=args.workers)
            rows.append((est.alpha, est.beta, est.samples, est.correlation, est.stderr))
        text = csv_text(["alpha", "beta", "samples", "empirical_C", "stderr"], rows)
        return Outcome({"pairs": len(rows), "shots": args.shots}, text)
    raise InputError(f"unknown lhv action {action!r}")


def cmd_quantum(args, cfg: RunConfig) -> Outcome:
    if args.state:
        try:
            state = quantum.TwoQubitState.from_json(_read_json(args.state))
        except InputError:
            raise
        except ValueError as exc:
            raise InputError(f"{args.state}: {exc}") from None
    else:
        state = quantum.werner_state(args.werner)
    box = quantum.QuantumBox(state)
    if args.chsh_max:
        opt = bci.maximize_chsh(box.correlation)
        art = {"chsh": opt.value, "angles": dict(zip(("a1", "b2", "a3", "b4"), opt.angles))}
        return Outcome({"chsh": opt.value, "violated": abs(opt.value) > 2}, dumps(art))
    th = np.linspace(0.0, math.pi, args.points)
    vals = box.correlation(th, np.zeros_like(th))
    text = csv_text(["theta", "C"], zip(th, vals))
    return Outcome({"points": args.points}, text)


def _sample_box_csv(box, d: int, rows: int, seed: int) -> str:
    gen = np.random.default_rng(seed)
    xs = sodbox.random_directions(gen, rows, d)
    ys = sodbox.random_directions(gen, rows, d)
    p = box.probabilities(xs, ys).reshape(4, -1).T
    header = [f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(d)] + ["p_pp", "p_pm", "p_mp", "p_mm"]
    return csv_text(header, (list(x) + list(y) + list(q) for x, y, q in zip(xs, ys, p)))


def cmd_sodbox(args, cfg: RunConfig) -> Outcome:
    if args.action == "sample":
        src = args.source
        if src == "pr":
            box = sodbox.pr_box_embedding(d=args.d)
        elif src.startswith("werner:"):
            box = quantum.BlochBox(quantum.werner_state(float(src.split(":", 1)[1])), args.d)
        else:
            raise InputError(f"field 'source': expected 'pr' or 'werner:P', got {src!r}")
        return Outcome({"rows": args.rows, "d": args.d}, _sample_box_csv(box, args.d, args.rows, cfg.seed))
    header, data = _read_csv(args.csv, ["p_pp", "p_pm", "p_mp", "p_mm"])
    xcols = [h for h in header if h.startswith("x")]
    d = len(xcols)
    need = [f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(d)]
    for col in need:
        if col not in header:
            raise InputError(f"{args.csv}: missing column '{col}'")
    sodbox.check_dimension(d)
    idx = {h: i for i, h in enumerate(header)}
    xs = data[:, [idx[f"x{i + 1}"] for i in range(d)]]
    ys = data[:, [idx[f"y{i + 1}"] for i in range(d)]]
    for name, v in (("x", xs), ("y", ys)):
        bad = np.nonzero(np.abs(np.linalg.norm(v, axis=1) - 1) > 1e-9)[0]
        if bad.size:
            raise InputError(f"{args.csv}: line {bad[0] + 2}, fields '{name}1..{name}{d}': not a unit vector")
    probs = data[:, [idx[k] for k in ("p_pp", "p_pm", "p_mp", "p_mm")]]
    fit = sodbox.fit_local_bilinear(xs, ys, probs)
    bias = fit.bias()
    om = fit.omega()
    pv = sodbox.check_unital_positive(om, seed=cfg.seed)
    cert = {
        "affine_residual": fit.residual,
        "transforms_fundamentally": fit.residual <= tolerances.tol("affine"),
        "bias": bias,
        "unbiased": bias <= tolerances.tol("unbiased"),
        "unital": pv.unital,
        "positivity_min": pv.minimum,
        "positivity_oracle_min": pv.oracle_minimum,
        "omega": om,
        "d": d,
    }
    ok = bool(cert["transforms_fundamentally"] and cert["unbiased"] and pv.ok)
    cert["passed"] = ok
    return Outcome({"affine_residual": fit.residual, "unbiased": cert["unbiased"], "unital": pv.unital,
                    "positivity_min": pv.minimum}, dumps(cert), negative=not ok)


def cmd_fit(args, cfg: RunConfig) -> Outcome:
    header, data = _read_csv(args.csv, ["alpha", "beta", "value"])
    idx = {h: i for i, h in enumerate(header)}
    samples = data[:, [idx["alpha"], idx["beta"], idx["value"]]]
    res = corrfn.fit_trig_series(samples, _spin_to_two_j(args.spin))
    f = res.function.pruned(args.prune) if args.prune else res.function
    art = {"function": f.to_json(), "residual_rms": res.residual_rms, "n_samples": res.n_samples}
    return Outcome({"n_terms": f.n_terms, "residual_rms": res.residual_rms}, dumps(art))


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="seed for all random streams (overrides config)")
    p.add_argument("--workers", type=int, default=1, help="sampling chunks; results depend on seed and worker count only")
    p.add_argument("--config", help="RunConfig JSON file (seed, tolerances, out, format)")
    p.add_argument("--out", help="write the artifact atomically to this path")
    p.add_argument("--format", choices=("json", "csv"), default=None,
                   help="convert the artifact (JSON objects become key,value rows; CSV rows become a JSON list)")


def _corr_source(p: argparse.ArgumentParser, werner: bool = True) -> None:
    p.add_argument("--corr", help="correlation-function JSON file")
    p.add_argument("--scifi", action="store_true", help="use (2/7)cos 3(a-b) - cos(a-b)")
    if werner:
        p.add_argument("--werner", type=float, help="use the Werner-state polarizer correlation with weight P")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spatiobox", description="Bell tests and local models for rotation-angle boxes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate a spin-J correlation series C(alpha, beta)",
                       description="Evaluate a finite SO(2)xSO(2) trigonometric correlation series C(alpha, beta), "
                                   "or tabulate it (or its uniform-marginal joint box) on a grid.")
    _corr_source(p)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--grid", type=int, default=0, help="emit CSV on a GRID x GRID torus grid instead")
    p.add_argument("--box", action="store_true", help="with --grid: emit joint probabilities P(a,b|alpha,beta)")
    p.set_defaults(run=cmd_eval)

    p = sub.add_parser("chsh", help="CHSH value (classical bound 2, Tsirelson 2*sqrt 2)",
                       description="Evaluate the four-term CHSH Bell expression C(a1,b2)+C(a3,b2)+C(a3,b4)-C(a1,b4) "
                                   "at given angles, or maximize |CHSH| over angles (classical bound 2).")
    _corr_source(p)
    p.add_argument("--angles", type=float, nargs=4, metavar=("A1", "B2", "A3", "B4"))
    p.set_defaults(run=cmd_chsh)

    p = sub.add_parser("bci", help="chained Braunstein-Caves inequality (bound N-2)",
                       description="Evaluate the chained Braunstein-Caves Bell inequality with N settings built "
                                   "from Theta+ and Theta- (classical bound N-2). Exit 2 when not violated.")
    _corr_source(p)
    p.add_argument("--n", type=int, required=True, help="even number of settings N >= 4")
    p.add_argument("--theta-plus", type=float, required=True)
    p.add_argument("--theta-minus", type=float, required=True)
    p.set_defaults(run=cmd_bci)

    p = sub.add_parser("witness", help="two-angle nonlocality witness under a spin bound",
                       description="Spin-bounded Bell witness: from the relational correlation at Theta+ (near 1) and "
                                   "Theta- (far from 1), search chained Braunstein-Caves inequalities for a violation. "
                                   "Exit 2 when none is found.")
    _corr_source(p)
    p.add_argument("--theta-plus", type=float, required=True)
    p.add_argument("--theta-minus", type=float, required=True)
    p.add_argument("--cap", type=int, default=bci.DEFAULT_CAP, help="largest N searched")
    p.set_defaults(run=cmd_witness)

    p = sub.add_parser("protocol", help="simulate the shared-random-angle witness protocol",
                       description="Simulate the two-angle witness protocol: shared uniform offset lambda, Alice at "
                                   "Theta+lambda with Theta in {Theta+, Theta-}, Bob at lambda; estimate the relational "
                                   "correlation and give a certified spin-bounded Bell-witness verdict. Exit 2 when not witnessed.")
    _corr_source(p)
    p.add_argument("--box", help="joint-box JSON file (four outcome series)")
    p.add_argument("--theta-plus", type=float, required=True)
    p.add_argument("--theta-minus", type=float, required=True)
    p.add_argument("--shots", type=int, default=100_000)
    p.add_argument("--spin", type=float, help="assumed spin bound J (default: from the source)")
    p.add_argument("--flip-b", action="store_true", help="relabel Bob's outcomes b -> -b")
    p.add_argument("--sigmas", type=float, default=bci.DEFAULT_SIGMAS, help="standard errors in the conservative margin")
    p.set_defaults(run=cmd_protocol)

    p = sub.add_parser("lhv", help="local hidden-variable models and the noise certificate",
                       description="Local hidden-variable constructions: gamma_N and gamma_J noise thresholds, the "
                                   "noisiness locality certificate, the window model and its sampler, and the square-wave "
                                   "model showing why a spin bound is needed.")
    p.add_argument("action", choices=("gamma", "gamma-j", "check", "build", "sample", "squarewave"))
    _corr_source(p)
    p.add_argument("--n", type=int, default=1, help="gamma: term count N; squarewave: n (period 2pi/n)")
    p.add_argument("--m", type=int, default=1, help="squarewave: odd m, Theta- = m pi/n")
    p.add_argument("--spin", type=float, default=0.5)
    p.add_argument("--mode", choices=("spin", "terms"), default="terms",
                   help="certificate threshold: worst case for the spin, or for the actual term count")
    p.add_argument("--xi", type=float, help="build: window half-width (function must have zero constant)")
    p.add_argument("--shots", type=int, default=100_000)
    p.add_argument("--angles", type=float, nargs=2, action="append", metavar=("ALPHA", "BETA"))
    p.add_argument("--points", type=int, default=181)
    p.set_defaults(run=cmd_lhv)

    p = sub.add_parser("quantum", help="Werner-state polarizer correlations",
                       description="Two-qubit polarizer measurements: sweep C(theta) = tr[rho M_theta x M_0] for a Werner "
                                   "state (-p cos 2 theta) or a given state, or maximize CHSH (Tsirelson bound 2*sqrt 2).")
    p.add_argument("--werner", type=float, default=1.0)
    p.add_argument("--state", help="two-qubit state JSON file ({'re': 4x4, 'im': 4x4})")
    p.add_argument("--sweep", action="store_true", help="emit CSV of C over theta in [0, pi] (default action)")
    p.add_argument("--chsh-max", action="store_true")
    p.add_argument("--points", type=int, default=181)
    p.set_defaults(run=cmd_quantum)

    p = sub.add_parser("sodbox", help="SO(d)-box premise checks (affine, unbiased, unital, positive)",
                       description="SO(d)-box certificate: fit sampled P(a,b|x,y) as a locally affine (transforms "
                                   "fundamentally) box, test local unbiasedness, then unitality and cone positivity of "
                                   "the bilinear form Omega. 'sample' writes demo CSV data. Exit 2 when a check fails.")
    p.add_argument("action", choices=("certify", "sample"))
    p.add_argument("--csv", help="certify: CSV with x1..xd,y1..yd,p_pp,p_pm,p_mp,p_mm")
    p.add_argument("--source", default="werner:1", help="sample: 'pr' or 'werner:P'")
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--rows", type=int, default=200)
    p.set_defaults(run=cmd_sodbox)

    p = sub.add_parser("fit", help="least-squares spin-J series fit",
                       description="Fit the finite SO(2)xSO(2) trigonometric series of spin J to CSV samples "
                                   "alpha,beta,value; emits the correlation-function JSON.")
    p.add_argument("--csv", required=True)
    p.add_argument("--spin", type=float, required=True)
    p.add_argument("--prune", type=float, default=0.0, help="drop fitted terms with |coefficients| <= PRUNE")
    p.set_defaults(run=cmd_fit)

    for sp in sub.choices.values():
        _common(sp)
    return parser


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out:
            cfg.out = args.out
        if args.format:
            cfg.format = args.format
            cfg.format_given = True
        if args.workers < 1:
            raise InputError("field 'workers': must be >= 1")
        with tolerances.overridden(cfg.tolerances):
            result: Outcome = args.run(args, cfg)
    except (InputError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=stderr)
        return EXIT_ERROR
    line = _summary_line(args.command + (f" {args.action}" if hasattr(args, "action") else ""),
                         dict(result.summary, status="negative" if result.negative else "ok")
                         if "status" not in result.summary else result.summary)
    artifact = result.artifact
    if artifact is not None and cfg.format_given:
        artifact = convert(artifact, cfg.format)
    if cfg.out and artifact is not None:
        atomic_write(cfg.out, artifact)
        print(line, file=stdout)
    else:
        if artifact is not None:
            stdout.write(artifact)
        print(line, file=stderr)
    return EXIT_NEGATIVE if result.negative else EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
