"""Command line entry point: ``stablab <command> [options]``.

Every command reads one JSON config (``--config``) or a named preset, applies
flag overrides, validates everything up front and writes its outputs
atomically together with a manifest that allows an exact re-run.

Exit codes: 0 success, 2 validation, 3 constant derivation, 4 verification
failure, 5 I/O, 6 fit unavailable.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import platform
import sys
import tempfile
from importlib import metadata

import numpy as np

from .errors import BlowUpError, DerivationError, FitUnavailableError, ParameterError, StabLabError

EXIT_OK, EXIT_VALIDATION, EXIT_DERIVATION, EXIT_VERIFY, EXIT_IO, EXIT_FIT = 0, 2, 3, 4, 5, 6

COMMANDS = ("derive-constants", "verify-lyapunov", "simulate", "mixing", "stability", "blowup")

MODEL_FIELDS = {"m", "n", "q", "eps_x", "eps_y", "h", "a", "pure_hamiltonian"}
INTEGRATOR_FIELDS = {"scheme", "dt", "steps", "seed", "thin"}
EXPERIMENT_FIELDS = {
    "derive-constants": {"rho"},
    "verify-lyapunov": {"samples", "seed", "which"},
    "simulate": {"s0", "N", "checkpoints", "format"},
    "mixing": {"s0_a", "s0_b", "N", "checkpoints", "coupling", "probes", "series"},
    "stability": {"s0", "N", "M", "checkpoints", "calibrate"},
    "blowup": {"x", "y", "points"},
}
LEDGER_FIELDS = ("rho", "b", "k2", "k3", "c1", "c2", "c3", "C2", "C3", "b12", "b13")

_BASE = {"model": {"m": 2, "n": 3, "q": 2.0, "eps_x": 1.0, "eps_y": 1.0, "h": "identity"},
         "integrator": {"scheme": "tamed_euler", "dt": 1e-3, "steps": 8000, "seed": 0, "thin": 1},
         "experiment": {}}


def _fig1(m, n, sign):
    return {"model": {"m": m, "n": n, "q": 2.0, "eps_x": 10.0, "eps_y": 10.0,
                      "h": "identity" if sign > 0 else "negated"},
            "integrator": {"scheme": "tamed_euler", "dt": 1e-4, "steps": 100_000, "seed": 0, "thin": 10},
            "experiment": {"s0": [0.0, 0.0]}}


PRESETS = {
    "config-A": {
        "model": dict(_BASE["model"]),
        "integrator": dict(_BASE["integrator"]),
        "experiment": {"s0_a": [5.0, 5.0], "s0_b": [-5.0, -5.0], "N": 4096,
                       "checkpoints": [0.5 * i for i in range(1, 17)]},
    },
}
for _m, _n in ((2, 9), (9, 2), (5, 5)):
    PRESETS[f"fig1-m{_m}n{_n}-plus"] = _fig1(_m, _n, 1)
    PRESETS[f"fig1-m{_m}n{_n}-minus"] = _fig1(_m, _n, -1)


class CliError(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


# ---------------------------------------------------------------------------
# config


def _merge(base, extra):
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def validate_config(cfg, command):
    """Reject unknown fields; return the config unchanged."""
    unknown = set(cfg) - {"model", "integrator", "experiment"}
    if unknown:
        raise CliError(EXIT_VALIDATION, f"unknown config section(s): {sorted(unknown)}")
    for section, allowed in (("model", MODEL_FIELDS), ("integrator", INTEGRATOR_FIELDS),
                             ("experiment", EXPERIMENT_FIELDS[command])):
        block = cfg.get(section, {})
        if not isinstance(block, dict):
            raise CliError(EXIT_VALIDATION, f"config section {section!r} must be an object")
        bad = set(block) - allowed
        if bad:
            raise CliError(EXIT_VALIDATION, f"unknown field(s) in {section}: {sorted(bad)}; "
                                            f"allowed: {sorted(allowed)}")
    return cfg


def build_config(args):
    cfg = copy.deepcopy(_BASE)
    if args.preset:
        if args.preset not in PRESETS:
            raise CliError(EXIT_VALIDATION, f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        cfg = _merge(cfg, PRESETS[args.preset])
        # presets carry experiment fields for several commands; keep the relevant ones
        cfg["experiment"] = {k: v for k, v in cfg["experiment"].items()
                             if k in EXPERIMENT_FIELDS[args.command]}
    if args.config:
        try:
            with open(args.config) as fh:
                user = json.load(fh)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read config {args.config}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_VALIDATION, f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise CliError(EXIT_VALIDATION, "config must be a JSON object")
        validate_config(user, args.command)
        cfg = _merge(cfg, user)
    model = cfg["model"]
    for flag, key in (("m", "m"), ("n", "n"), ("q", "q"), ("eps_x", "eps_x"), ("eps_y", "eps_y"),
                      ("h", "h"), ("a", "a")):
        v = getattr(args, flag)
        if v is not None:
            model[key] = v
    if args.pure_hamiltonian:
        model["pure_hamiltonian"] = True
    integ = cfg["integrator"]
    for key in ("scheme", "dt", "steps", "seed"):
        v = getattr(args, key)
        if v is not None:
            integ[key] = v
    if getattr(args, "samples", None) is not None:
        cfg["experiment"]["samples"] = args.samples
    ledger = {}
    for item in args.override:
        if "=" not in item:
            raise CliError(EXIT_VALIDATION, f"--override expects KEY=VALUE (got {item!r})")
        key, raw = item.split("=", 1)
        val = _parse_value(raw)
        if key in LEDGER_FIELDS:
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise CliError(EXIT_VALIDATION, f"ledger override {key} needs a number (got {raw!r})")
            ledger[key] = float(val)
        elif "." in key:
            section, field = key.split(".", 1)
            if section not in cfg:
                raise CliError(EXIT_VALIDATION, f"unknown config section in override {key!r}")
            cfg[section][field] = val
        else:
            raise CliError(EXIT_VALIDATION, f"unknown override key {key!r}; use a ledger constant "
                                            f"{LEDGER_FIELDS} or SECTION.FIELD")
    validate_config(cfg, args.command)
    return cfg, ledger


def make_params(model):
    from .model import PROFILES, ModelParams

    h = model.get("h", "identity")
    if h not in PROFILES:
        raise CliError(EXIT_VALIDATION, f"unknown h {h!r}; choose from {sorted(PROFILES)}")
    m, n = model.get("m"), model.get("n")
    for name, v in (("m", m), ("n", n)):
        if isinstance(v, bool) or not isinstance(v, int):
            raise CliError(EXIT_VALIDATION, f"{name} must be an integer >= 2 (got {v!r})")
    try:
        p = ModelParams.from_profile(m, n, model.get("q"), model.get("eps_x"), model.get("eps_y"), h,
                                     pure_hamiltonian=bool(model.get("pure_hamiltonian", False)))
        if "a" in model:
            p = p.replace(a=float(model["a"]))
            p.check_profile()
    except (ParameterError, TypeError, ValueError) as exc:
        raise CliError(EXIT_VALIDATION, f"invalid model: {exc}") from None
    return p


def make_integrator(integ):
    from .sde import IntegratorConfig

    try:
        return IntegratorConfig(integ.get("scheme", "tamed_euler"), float(integ.get("dt", 1e-3)),
                                integ.get("steps", 1000), integ.get("seed", 0), integ.get("thin", 1))
    except (ParameterError, TypeError, ValueError) as exc:
        raise CliError(EXIT_VALIDATION, f"invalid integrator: {exc}") from None


def _point(v, name):
    try:
        x, y = (float(c) for c in v)
    except (TypeError, ValueError):
        raise CliError(EXIT_VALIDATION, f"{name} must be a pair [x, y] (got {v!r})") from None
    if not (math.isfinite(x) and math.isfinite(y)):
        raise CliError(EXIT_VALIDATION, f"{name} must be finite (got {v!r})")
    return x, y


def _positive_int(v, name):
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise CliError(EXIT_VALIDATION, f"{name} must be an integer >= 1 (got {v!r})")
    return v


# ---------------------------------------------------------------------------
# output


def dumps(obj):
    from .ergodicity import dumps as _dumps

    return _dumps(obj)


def write_atomic(path, data):
    """Write text or bytes to ``path`` via a temporary file and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
        try:
            with os.fdopen(fd, mode) as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from None


def _versions():
    out = {"python": platform.python_version(), "numpy": np.__version__}
    for dist in ("artifact", "scipy", "pot"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            pass
    return out


class Outputs:
    def __init__(self, directory, command, params, cfg):
        self.directory = directory
        self.command = command
        self.params = params
        self.cfg = cfg
        self.files = []

    def write(self, name, data):
        write_atomic(os.path.join(self.directory, name), data)
        self.files.append(name)

    def write_with(self, name, writer):
        """Let ``writer(path)`` produce a file, then move it into place."""
        target = os.path.join(self.directory, name)
        try:
            os.makedirs(self.directory, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-")
            os.close(fd)
            try:
                writer(tmp)
                os.replace(tmp, target)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write {target}: {exc}") from None
        self.files.append(name)

    def manifest(self, extra=None):
        doc = {"command": self.command, "params": self.params.to_dict(),
               "params_digest": self.params.digest(), "seed": self.cfg["integrator"].get("seed", 0),
               "config": self.cfg, "outputs": list(self.files), "versions": _versions()}
        if extra:
            doc.update(extra)
        write_atomic(os.path.join(self.directory, "manifest.json"), dumps(doc) + "\n")


# ---------------------------------------------------------------------------
# commands


def _ledger(params, cfg, overrides):
    from .lyapunov import derive_constants, with_overrides

    try:
        k = derive_constants(params, rho=cfg["experiment"].get("rho"))
    except DerivationError as exc:
        raise CliError(EXIT_DERIVATION, f"constant derivation failed: {exc}") from None
    if overrides:
        k = with_overrides(params, k, **overrides)
    return k


def cmd_derive_constants(args, cfg, ledger_overrides, out):
    from .lyapunov import PHI_DESCRIPTION, c1_lower_bounds, check_invariants

    params = make_params(cfg["model"])
    k = _ledger(params, cfg, ledger_overrides)
    checks = check_invariants(params, k)
    doc = {"params": params.to_dict(), "constants": k.to_dict(),
           "c1_lower_bounds": c1_lower_bounds(params, k.rho, k.b), "phi": PHI_DESCRIPTION,
           "assertions": [{"name": n, "ok": ok, "detail": d} for n, ok, d in checks]}
    text = dumps(doc) + "\n"
    out.write(text)
    if args.out:
        o = Outputs(args.out, args.command, params, cfg)
        o.write("constants.json", text)
        o.manifest()
    if not all(ok for _, ok, _ in checks):
        return EXIT_DERIVATION
    return EXIT_OK


def cmd_verify_lyapunov(args, cfg, ledger_overrides, out):
    from .lyapunov import DRIFT_CONDITIONS, verify_drift_condition

    params = make_params(cfg["model"])
    k = _ledger(params, cfg, ledger_overrides)
    exp = cfg["experiment"]
    samples = _positive_int(exp.get("samples", 100_000), "samples")
    seed = exp.get("seed", cfg["integrator"].get("seed", 0))
    which = exp.get("which", ["v1", "v2", "v3", "v12", "v13", "V"])
    unknown = [w for w in which if w not in DRIFT_CONDITIONS]
    if unknown:
        raise CliError(EXIT_VALIDATION, f"unknown Lyapunov function(s) {unknown}; choose from {sorted(DRIFT_CONDITIONS)}")
    reports = []
    for w in which:
        try:
            reports.append(verify_drift_condition(params, k, w, n_samples=samples, seed=seed))
        except StabLabError as exc:
            # a ledger that cannot even be assembled fails verification
            reports.append({"which": w, "pass": False, "error": str(exc)})
    docs = [r if isinstance(r, dict) else r.to_dict() for r in reports]
    ok = all(d["pass"] for d in docs)
    doc = {"params": params.to_dict(), "constants": k.to_dict(), "samples": samples,
           "reports": docs, "pass": ok}
    text = dumps(doc) + "\n"
    out.write(text)
    if args.out:
        o = Outputs(args.out, args.command, params, cfg)
        o.write("verify.json", text)
        o.manifest({"pass": ok})
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_simulate(args, cfg, ledger_overrides, out):
    from .sde import ode_reference, simulate_ensemble, simulate_path

    params = make_params(cfg["model"])
    integ = make_integrator(cfg["integrator"])
    exp = cfg["experiment"]
    s0 = _point(exp.get("s0", [0.0, 0.0]), "s0")
    N = _positive_int(exp.get("N", 1), "N")
    fmt = exp.get("format", "csv")
    if fmt not in ("csv", "binary", "both"):
        raise CliError(EXIT_VALIDATION, f"format must be csv, binary or both (got {fmt!r})")
    o = Outputs(args.out or ".", args.command, params, cfg)

    def emit(name, obj):
        if fmt in ("csv", "both"):
            o.write_with(name + ".csv", obj.to_csv)
        if fmt in ("binary", "both"):
            o.write_with(name + ".bin", obj.to_binary)

    if params.pure_hamiltonian:
        # the Hamiltonian flow is deterministic: integrate it, reporting blow-up
        t_eval = np.linspace(0.0, integ.horizon, integ.steps // integ.thin + 1)
        try:
            traj = ode_reference(params, s0, integ.horizon, t_eval=t_eval)
            emit("trajectory", traj)
            o.manifest({"blowup": None})
            out.write(dumps({"blowup": None, "outputs": o.files}) + "\n")
        except BlowUpError as exc:
            if exc.partial is not None:
                emit("trajectory", exc.partial)
            o.manifest({"blowup": {"t_star": exc.t_star, "message": str(exc)}})
            out.write(dumps({"blowup": {"t_star": exc.t_star}, "outputs": o.files}) + "\n")
            print(f"blow-up detected: {exc}", file=sys.stderr)
        return EXIT_OK
    if N == 1 and "checkpoints" not in exp:
        traj = simulate_path(params, integ, s0)
        emit("trajectory", traj)
        info = {"blowup_flag": traj.blowup_flag, "max_abs_state": float(np.max(np.abs(traj.states)))}
        o.manifest(info)
        out.write(dumps(dict(info, outputs=o.files)) + "\n")
        return EXIT_OK
    try:
        ens = simulate_ensemble(params, integ, s0, N, exp.get("checkpoints"), args.threads)
    except BlowUpError as exc:
        o.manifest({"blowup": {"t": exc.t_star, "message": str(exc)}})
        print(f"ensemble became non-finite: {exc}", file=sys.stderr)
        return EXIT_OK
    for e in ens:
        emit(f"ensemble_t{e.t:.6g}", e)
    o.manifest()
    out.write(dumps({"outputs": o.files}) + "\n")
    return EXIT_OK


def _read_series(path):
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=1)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read series {path}: {exc}") from None
    except ValueError as exc:
        raise CliError(EXIT_VALIDATION, f"series {path} must be a CSV with header and columns t,d: {exc}") from None
    if data.shape[1] < 2:
        raise CliError(EXIT_VALIDATION, f"series {path} needs two columns t,d")
    return data[:, 0], data[:, 1]


def cmd_mixing(args, cfg, ledger_overrides, out):
    from .ergodicity import fit_exponential, mixing_experiment, series_csv

    exp = cfg["experiment"]
    series = args.series or exp.get("series")
    if series:
        t, d = _read_series(series)
        try:
            fit = fit_exponential(t, d)
        except FitUnavailableError as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_FIT
        out.write(dumps({"fitted_C": fit.C, "fitted_c": fit.c, "fit_r2": fit.r2,
                         "fit_points": list(fit.used)}) + "\n")
        return EXIT_OK
    params = make_params(cfg["model"])
    k = _ledger(params, cfg, ledger_overrides)
    integ = make_integrator(cfg["integrator"])
    a = _point(exp.get("s0_a", [5.0, 5.0]), "s0_a")
    b = _point(exp.get("s0_b", [-5.0, -5.0]), "s0_b")
    N = _positive_int(exp.get("N", 4096), "N")
    cps = exp.get("checkpoints", [0.5 * i for i in range(1, 17)])
    coupling = exp.get("coupling", "independent")
    probes = _positive_int(exp.get("probes", 1_000_000), "probes")
    o = Outputs(args.out or ".", args.command, params, cfg)
    try:
        rep = mixing_experiment(params, k, a, b, N, cps, seed=integ.seed, dt=integ.dt,
                                coupling=coupling, probes=probes, threads=args.threads)
    except FitUnavailableError as exc:
        o.write("series.csv", series_csv(exc.times, exc.distances))
        o.manifest({"fit": None, "message": str(exc)})
        print(str(exc), file=sys.stderr)
        return EXIT_FIT
    o.write("mixing.json", rep.to_json() + "\n")
    o.write("series.csv", rep.to_csv())
    o.manifest()
    out.write(dumps({"fitted_C": rep.fitted_C, "fitted_c": rep.fitted_c, "fit_r2": rep.fit_r2,
                     "noise_floor": rep.noise_floor}) + "\n")
    return EXIT_OK


def cmd_stability(args, cfg, ledger_overrides, out):
    from .ergodicity import radius_quantile, stability_from_ensembles
    from .sde import simulate_ensemble

    params = make_params(cfg["model"])
    integ = make_integrator(cfg["integrator"])
    exp = cfg["experiment"]
    s0 = _point(exp.get("s0", [0.0, 0.0]), "s0")
    N = _positive_int(exp.get("N", 10_000), "N")
    cps = [float(t) for t in exp.get("checkpoints", [integ.horizon])]
    calib = exp.get("calibrate")
    M = exp.get("M")
    if (M is None) == (calib is None):
        raise CliError(EXIT_VALIDATION, "give exactly one of experiment.M or experiment.calibrate {t, quantile}")
    if calib is not None:
        try:
            t_cal, q_cal = float(calib["t"]), float(calib["quantile"])
        except (KeyError, TypeError, ValueError):
            raise CliError(EXIT_VALIDATION, "calibrate must be an object {\"t\": ..., \"quantile\": ...}") from None
        if not 0 < q_cal < 1:
            raise CliError(EXIT_VALIDATION, f"calibrate.quantile must lie in (0, 1) (got {q_cal!r})")
        cps = sorted(set(cps) | {t_cal})
    elif not (isinstance(M, (int, float)) and M > 0):
        raise CliError(EXIT_VALIDATION, f"M must be > 0 (got {M!r})")
    try:
        ens = simulate_ensemble(params, integ, s0, N, cps, args.threads)
    except ParameterError as exc:
        raise CliError(EXIT_VALIDATION, str(exc)) from None
    if calib is not None:
        M = radius_quantile(ens[cps.index(t_cal)], q_cal)
        ens = [e for e in ens if e.t > t_cal]
        if not ens:
            raise CliError(EXIT_VALIDATION, "no checkpoints after the calibration time")
    rep = stability_from_ensembles(ens, float(M))
    o = Outputs(args.out or ".", args.command, params, cfg)
    o.write("stability.json", rep.to_json() + "\n")
    o.manifest()
    out.write(rep.to_json() + "\n")
    return EXIT_OK


def cmd_blowup(args, cfg, ledger_overrides, out):
    from .model import blowup_time

    params = make_params(cfg["model"])
    if params.m == params.n:
        raise CliError(EXIT_VALIDATION, "m == n: the Hamiltonian flow has global solutions, "
                                        "so there is no blow-up time to tabulate")
    exp = cfg["experiment"]
    if "points" in exp:
        pts = [_point(p, "points[]") for p in exp["points"]]
    else:
        axes = []
        for name in ("x", "y"):
            spec = exp.get(name, [-2.0, 2.0, 5])
            try:
                lo, hi, cnt = float(spec[0]), float(spec[1]), int(spec[2])
            except (TypeError, ValueError, IndexError):
                raise CliError(EXIT_VALIDATION, f"{name} grid must be [lo, hi, count] (got {spec!r})") from None
            if cnt < 1:
                raise CliError(EXIT_VALIDATION, f"{name} grid needs count >= 1")
            axes.append(np.linspace(lo, hi, cnt))
        pts = [(float(x), float(y)) for x in axes[0] for y in axes[1]]
    lines = ["x0,y0,t_star"]
    for x, y in pts:
        ts = blowup_time(params, (x, y))
        lines.append(f"{x:.17g},{y:.17g}," + ("" if ts is None else f"{ts:.17g}"))
    text = "\n".join(lines) + "\n"
    o = Outputs(args.out or ".", args.command, params, cfg)
    o.write("blowup.csv", text)
    o.manifest()
    out.write(text)
    return EXIT_OK


HANDLERS = {
    "derive-constants": cmd_derive_constants,
    "verify-lyapunov": cmd_verify_lyapunov,
    "simulate": cmd_simulate,
    "mixing": cmd_mixing,
    "stability": cmd_stability,
    "blowup": cmd_blowup,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="stablab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config with model/integrator/experiment blocks")
        p.add_argument("--preset", help=f"one of {', '.join(sorted(PRESETS))}")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help="worker threads (default: $STAB_LAB_THREADS or 1)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="ledger constant (e.g. c1=0.1) or SECTION.FIELD=JSON")
        p.add_argument("--m", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--q", type=float)
        p.add_argument("--eps-x", dest="eps_x", type=float)
        p.add_argument("--eps-y", dest="eps_y", type=float)
        p.add_argument("--h", help="identity, negated or wobble")
        p.add_argument("--a", type=float, help="declared lower bound on |h'|")
        p.add_argument("--pure-hamiltonian", action="store_true", help="drop the |w|^q terms")
        p.add_argument("--scheme", choices=("tamed_euler", "euler"))
        p.add_argument("--dt", type=float)
        p.add_argument("--steps", type=int)
        if name == "verify-lyapunov":
            p.add_argument("--samples", type=int)
        if name == "mixing":
            p.add_argument("--series", help="CSV of t,d to fit instead of simulating")
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    if args.threads is None and os.environ.get("STAB_LAB_THREADS"):
        try:
            args.threads = int(os.environ["STAB_LAB_THREADS"])
        except ValueError:
            print("error: STAB_LAB_THREADS must be an integer", file=sys.stderr)
            return EXIT_VALIDATION
    try:
        cfg, ledger = build_config(args)
        return HANDLERS[args.command](args, cfg, ledger, out)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DerivationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DERIVATION


if __name__ == "__main__":
    sys.exit(main())
