"""Config-driven command-line front end.

Usage::

    rsjd --config run.toml [--seed N] [--out DIR] [--threads N]
    rsjd reproduce example-5.3 [--seed N] [--out DIR]

Config files are TOML with ``format_version = 1``.  Top-level keys:
``command`` (validate, generator-eval, check-lyapunov, simulate, hitting,
classify, invariant or reproduce), ``seed``, ``output_dir``.  Sections:

``[model]``
    ``builtin`` plus optional ``params`` table, or an expression model with
    ``dim``, ``regimes``, ``drift`` (d expressions), ``diffusion`` (one
    expression times the identity, or d x d expressions), ``q`` (m x m
    expressions; the diagonal is implied by zero row sums and must be
    ``"0"``) and ``q_bound``; optional ``[model.jumps]`` with
    ``alpha_inner``, ``alpha_outer``, ``scale``, ``level`` (expression),
    ``tilt`` (d expressions) and ``envelope_level``.
``[quadrature]``, ``[sim]``, ``[cycles]``
    Numeric settings with the defaults of QuadratureConfig, SimConfig and
    CycleConfig.
``[<command>]``
    Per-command options, see ``COMMAND_KEYS``.

Expressions use the grammar in ``rsjd.expr``.  A manifest.json written by
a previous run is accepted in place of a TOML file.

Exit status: 0 success, 2 negative verdict (failed check, transience or
inconclusive classification), 1 error (with error.json).
"""

import argparse
from dataclasses import asdict, dataclass, field, fields
import json
import math
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .ergodic import CycleConfig, estimate_invariant, positivity_check, run_cycles, time_average
from .expr import Expression, ExpressionError, expression_function
from .generator import QuadratureConfig, local_term, nonlocal_result, switching_term
from .jumps import PowerLawProfile, RadialEnvelope, TiltedRadialKernel
from .lyapunov import (check_c1, check_c2, drift_jump_criterion_1d, exit_witness,
                       power_criterion)
from .model import BUILTIN_FAMILIES, ModelSpec, builtin_model, validate_spec
from .simulate import SimConfig, simulate_path, terminal_values
from .stopping import Ball, TargetSet, classify, estimate_hitting
from .testfunctions import Growth, builtin_lyapunov

FORMAT_VERSION = 1
COMMANDS = ("validate", "generator-eval", "check-lyapunov", "simulate", "hitting", "classify",
            "invariant", "reproduce")
EXIT_OK, EXIT_ERROR, EXIT_NEGATIVE = 0, 1, 2

TOP_KEYS = {"format_version", "command", "seed", "output_dir", "model", "quadrature", "sim",
            "cycles"} | set(COMMANDS)
MODEL_KEYS = {"builtin", "params", "dim", "regimes", "drift", "diffusion", "q", "q_bound",
              "jumps", "name"}
JUMP_KEYS = {"alpha_inner", "alpha_outer", "scale", "level", "tilt", "envelope_level"}
CYCLE_DEFAULTS = {"E_center": None, "E_radius": 0.5, "D_center": None, "D_radius": 2.0,
                  "regime": 1, "n_cycles": 200, "warmup_cycles": 10, "chains": 16}
COMMAND_KEYS = {
    "validate": {"box_radius": 5.0, "sample_count": 200, "tolerance": 0.0},
    "generator-eval": {"function": None, "growth": "power:2", "points": None, "regimes": None},
    "check-lyapunov": {"criterion": "C1", "function": None, "lyapunov": None,
                       "lyapunov_params": {}, "r_min": 1.0, "r_max": 20.0, "radii": 32,
                       "directions": None, "delta": 1.0, "D_radius": 1.0, "sample_count": 400},
    "simulate": {"x0": None, "regime": 1, "horizon": 1.0, "n_paths": 1000, "export_paths": 1},
    "hitting": {"x0": None, "regime": 1, "center": None, "radius": 1.0, "kind": "cylinder",
                "target_regime": None, "n_paths": 2000, "horizons": [8.0, 16.0, 32.0]},
    "classify": {"starts": None, "domains": None, "n_paths": 2000, "horizons": None},
    "invariant": {"positivity_balls": [], "time_average": [], "T": 200.0, "n_paths": 32},
    "reproduce": {"target": "example-5.3", "n_paths": 2000, "dt": 0.02},
}
REPRODUCE_TARGETS = ("example-5.3",)


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass
class RunConfig:
    command: str
    seed: int
    output_dir: str
    model: dict
    quadrature: QuadratureConfig
    sim: SimConfig
    cycles: dict
    options: dict
    threads: int = 1
    source: str = None

    def to_dict(self):
        return {"format_version": FORMAT_VERSION, "command": self.command, "seed": self.seed,
                "output_dir": self.output_dir, "model": self.model,
                "quadrature": asdict(self.quadrature),
                "sim": {k: v for k, v in asdict(self.sim).items() if k != "seed"},
                "cycles": self.cycles, self.command: self.options}


# -- parsing --------------------------------------------------------------------


def _load(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    if path.endswith(".json"):
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as err:
            raise ConfigError(f"parse error at line {err.lineno}: {err.msg}") from None
        # a run manifest carries the resolved config
        return data["config"] if "manifest_version" in data else data
    try:
        import tomllib
    except ImportError:
        import tomli as tomllib
    try:
        return tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"parse error: {err}") from None


def _check_keys(table, allowed, where):
    if not isinstance(table, dict):
        raise ConfigError(f"{where} must be a table")
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key {key}" + (f" in [{where}]" if where else ""))


def _dataclass_from(cls, table, where, **extra):
    names = {f.name for f in fields(cls)} - set(extra)
    _check_keys(table, names, where)
    try:
        return cls(**table, **extra)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"[{where}] {err}") from None


def parse_config(path, seed=None, out=None, threads=None):
    data = _load(path)
    return config_from_dict(data, seed, out, threads, source=path)


def config_from_dict(data, seed=None, out=None, threads=None, source=None):
    _check_keys(data, TOP_KEYS, "")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(f"format_version must be {FORMAT_VERSION}, got {version!r}")
    command = data.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}, got {command!r}")
    present = [c for c in COMMANDS if c in data and c != command]
    if present:
        raise ConfigError(f"exactly one command: found sections for {present} besides {command!r}")
    seed = int(data.get("seed", 0)) if seed is None else int(seed)
    output_dir = out or data.get("output_dir", "rsjd-out")

    model = data.get("model", {"builtin": "ou-benchmark"}) if command != "reproduce" else data.get("model", {})
    if command != "reproduce":
        _check_model(model)
    quad = _dataclass_from(QuadratureConfig, data.get("quadrature", {}), "quadrature")
    sim_table = dict(data.get("sim", {}))
    sim = _dataclass_from(SimConfig, sim_table, "sim", seed=seed % 2 ** 64)
    cycles = dict(CYCLE_DEFAULTS)
    _check_keys(data.get("cycles", {}), set(CYCLE_DEFAULTS), "cycles")
    cycles.update(data.get("cycles", {}))
    options = dict(COMMAND_KEYS[command])
    _check_keys(data.get(command, {}), set(options), command)
    options.update(data.get(command, {}))
    if command == "reproduce" and options["target"] not in REPRODUCE_TARGETS:
        raise ConfigError(f"unknown reproduce target {options['target']!r}; known: {REPRODUCE_TARGETS}")
    return RunConfig(command, seed, output_dir, model, quad, sim, cycles, options,
                     int(threads or 1), source)


def _check_model(model):
    _check_keys(model, MODEL_KEYS, "model")
    if "builtin" in model:
        extra = set(model) - {"builtin", "params"}
        if extra:
            raise ConfigError(f"builtin models take only 'params', found {sorted(extra)}")
        if model["builtin"] not in BUILTIN_FAMILIES:
            raise ConfigError(f"unknown builtin {model['builtin']!r}; expected one of {BUILTIN_FAMILIES}")
        return
    for key in ("dim", "regimes", "drift", "diffusion", "q", "q_bound"):
        if key not in model:
            raise ConfigError(f"expression model needs key {key}")
    if "jumps" in model:
        _check_keys(model["jumps"], JUMP_KEYS, "model.jumps")


# -- model construction ----------------------------------------------------------


def build_model(model):
    if "builtin" in model:
        try:
            return builtin_model(model["builtin"], model.get("params"))
        except ValueError as err:
            raise ConfigError(f"[model] {err}") from None
    d, m = int(model["dim"]), int(model["regimes"])
    try:
        drift = [Expression(e, d, m) for e in _list(model["drift"], d, "drift")]
        diff = model["diffusion"]
        if isinstance(diff, str):
            scalar = Expression(diff, d, m)
            sig = None
        else:
            rows = _list(diff, d, "diffusion")
            sig = [[Expression(e, d, m) for e in _list(r, d, "diffusion row")] for r in rows]
        qrows = _list(model["q"], m, "q")
        q = [[None if a == b else Expression(e, d, m)
              for b, e in enumerate(_list(r, m, "q row"))] for a, r in enumerate(qrows)]
        for a, r in enumerate(qrows):
            if str(r[a]).strip() not in ("0", ""):
                raise ConfigError("q diagonal entries are implied by zero row sums and must be \"0\"")
    except ExpressionError as err:
        raise ConfigError(f"[model] {err}") from None

    def drift_fn(x, i):
        return np.stack([e(x, i) for e in drift], axis=-1)

    def diffusion_fn(x, i):
        if sig is None:
            s = scalar(x, i)
            return s[..., None, None] * np.eye(d)
        return np.stack([np.stack([e(x, i) for e in row], axis=-1) for row in sig], axis=-2)

    def q_fn(x):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        out = np.zeros(shape + (m, m))
        for a in range(m):
            for b in range(m):
                if a != b:
                    out[..., a, b] = q[a][b](x, a + 1)
            out[..., a, a] = -out[..., a, :].sum(axis=-1)
        return out

    kernel = envelope = None
    if "jumps" in model:
        j = model["jumps"]
        if "envelope_level" not in j or "alpha_inner" not in j:
            raise ConfigError("[model.jumps] needs alpha_inner and envelope_level")
        profile = PowerLawProfile(d, float(j.get("scale", 1.0)), float(j["alpha_inner"]),
                                  float(j.get("alpha_outer", j["alpha_inner"])))
        try:
            level = Expression(j.get("level", "1"), d, m)
            tilt = [Expression(e, d, m) for e in _list(j["tilt"], d, "tilt")] if "tilt" in j else None
        except ExpressionError as err:
            raise ConfigError(f"[model.jumps] {err}") from None
        tilt_fn = (lambda x, i: np.stack([e(x, i) for e in tilt], axis=-1)) if tilt else None
        kernel = TiltedRadialKernel(profile, lambda x, i: level(x, i), tilt_fn)
        envelope = RadialEnvelope(profile, float(j["envelope_level"]))
    return ModelSpec(d, m, drift_fn, diffusion_fn, q_fn, float(model["q_bound"]), kernel, envelope,
                     name=model.get("name", "expression-model"), params=dict(model))


def _list(v, n, what):
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise ConfigError(f"{what} must be a list of {n} entries")
    return list(v)


def _growth(tag):
    parts = str(tag).split(":")
    try:
        if parts[0] == "bounded":
            return Growth.bounded(float(parts[1]) if len(parts) > 1 else 1.0)
        if parts[0] == "power":
            return Growth.polynomial(float(parts[1]), float(parts[2]) if len(parts) > 2 else 1.0)
    except (IndexError, ValueError):
        pass
    raise ConfigError(f"growth must be 'bounded[:C]' or 'power:p[:C]', got {tag!r}")


def _point(v, d, what):
    if v is None:
        return np.zeros(d)
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.shape != (d,):
        raise ConfigError(f"{what} must have {d} coordinates")
    return arr


def _function(opts, spec, key="function"):
    src = opts.get(key)
    if src is None:
        raise ConfigError(f"option {key} is required")
    try:
        return expression_function(src, spec.dim, spec.num_regimes, _growth(opts.get("growth", "power:2")))
    except ExpressionError as err:
        raise ConfigError(str(err)) from None


# -- commands ------------------------------------------------------------------


def _cmd_validate(rc, spec):
    o = rc.options
    rep = validate_spec(spec, float(o["box_radius"]), int(o["sample_count"]), rc.seed, float(o["tolerance"]))
    return rep.to_dict(), (EXIT_OK if rep.passed else EXIT_NEGATIVE), {}


def _cmd_generator_eval(rc, spec):
    o = rc.options
    f = _function(o, spec)
    pts = o["points"] if o["points"] is not None else [[0.0] * spec.dim]
    regimes = o["regimes"] or list(spec.regimes)
    rows = []
    for p in pts:
        x = _point(p, spec.dim, "point")
        for reg in regimes:
            loc = float(local_term(spec, f, x, reg))
            sw = float(switching_term(spec, f, x, reg))
            nl = nonlocal_result(spec, f, x, reg, rc.quadrature)
            rows.append({"x": x.tolist(), "regime": int(reg), "value": loc + sw + nl.value,
                         "local": loc, "switching": sw, "nonlocal": nl.value,
                         "error_bound": nl.error})
    return {"function": o["function"], "results": rows}, EXIT_OK, {}


def _cmd_check_lyapunov(rc, spec):
    o = rc.options
    crit = str(o["criterion"]).upper() if o["criterion"] != "exit" else "exit"
    if crit in ("C1", "C2"):
        if o["lyapunov"]:
            V = builtin_lyapunov(o["lyapunov"], o["lyapunov_params"])
        else:
            V = _function(o, spec)
        check = check_c1 if crit == "C1" else check_c2
        rep = check(spec, V, float(o["r_min"]), float(o["r_max"]), int(o["radii"]),
                    o["directions"], rc.quadrature)
    elif crit == "E52":
        radii = np.geomspace(float(o["r_min"]), float(o["r_max"]), int(o["radii"]))
        rep = drift_jump_criterion_1d(spec, radii, rc.quadrature)
    elif crit == "E51":
        rep = power_criterion(spec, float(o["delta"]), float(o["r_min"]), float(o["r_max"]),
                              int(o["radii"]), o["directions"])
    elif crit == "exit":
        w = exit_witness(spec, float(o["D_radius"]), int(o["sample_count"]), rc.seed)
        rep = w.check
        rep.details = dict(rep.details, beta=w.beta, gamma=w.gamma, kappa0=w.kappa0, kappa1=w.kappa1)
    else:
        raise ConfigError(f"criterion must be C1, C2, E51, E52 or exit, got {o['criterion']!r}")
    return rep.to_dict(), (EXIT_OK if rep.holds else EXIT_NEGATIVE), {}


def _cmd_simulate(rc, spec):
    o = rc.options
    x0 = _point(o["x0"], spec.dim, "x0")
    i0, horizon, n = int(o["regime"]), float(o["horizon"]), int(o["n_paths"])
    X, I, alive = terminal_values(spec, x0, i0, horizon, rc.sim, n)
    files = {}
    for k in range(int(o["export_paths"])):
        rec = simulate_path(spec, x0, i0, horizon, rc.sim, path_index=k)
        files[f"path_{k}.csv"] = rec.to_csv()
    se = X.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(spec.dim)
    out = {"n_paths": n, "horizon": horizon, "terminal_mean": X.mean(axis=0).tolist(),
           "terminal_mean_se": se.tolist(),
           "regime_frequencies": [float(np.mean(I == r)) for r in spec.regimes],
           "alive_fraction": float(np.mean(alive))}
    return out, EXIT_OK, files


def _cmd_hitting(rc, spec):
    o = rc.options
    x0 = _point(o["x0"], spec.dim, "x0")
    ball = Ball(_point(o["center"], spec.dim, "center"), float(o["radius"]))
    tgt = TargetSet(ball, o["kind"], o["target_regime"])
    st = estimate_hitting(spec, (x0, int(o["regime"])), tgt, int(o["n_paths"]),
                          [float(h) for h in o["horizons"]], rc.sim)
    return dict(st.to_dict(), target=tgt.label()), EXIT_OK, {"survival.csv": st.survival_csv()}


def _starts_domains(o, spec):
    starts = o["starts"] or [{"x": [3.0] + [0.0] * (spec.dim - 1), "regime": 1},
                             {"x": [0.0] * (spec.dim - 1) + [-3.0], "regime": spec.num_regimes}]
    domains = o["domains"] or [{"center": [0.0] * spec.dim, "radius": 1.0},
                               {"center": [0.5] + [0.0] * (spec.dim - 1), "radius": 1.5}]
    for s in starts:
        _check_keys(s, {"x", "regime"}, "classify.starts")
    for d in domains:
        _check_keys(d, {"center", "radius"}, "classify.domains")
    starts = [(_point(s["x"], spec.dim, "start"), int(s.get("regime", 1))) for s in starts]
    domains = [Ball(_point(d["center"], spec.dim, "center"), float(d["radius"])) for d in domains]
    return starts, domains


def _classification(spec, o, sim):
    starts, domains = _starts_domains(o, spec)
    horizons = [float(h) for h in o["horizons"]] if o.get("horizons") else None
    return classify(spec, starts, domains, int(o["n_paths"]), sim, horizons)


def _cmd_classify(rc, spec):
    c = _classification(spec, rc.options, rc.sim)
    code = EXIT_NEGATIVE if c.verdict in ("transience-suspected", "inconclusive") else EXIT_OK
    return c.to_dict(), code, {}


def _cycle_config(rc, spec):
    c = rc.cycles
    E = Ball(_point(c["E_center"], spec.dim, "E_center"), float(c["E_radius"]))
    D = Ball(_point(c["D_center"], spec.dim, "D_center"), float(c["D_radius"]))
    try:
        return CycleConfig(E, D, int(c["regime"]), int(c["n_cycles"]), int(c["warmup_cycles"]),
                           rc.sim, int(c["chains"]))
    except ValueError as err:
        raise ConfigError(f"[cycles] {err}") from None


def _cmd_invariant(rc, spec):
    o = rc.options
    cc = _cycle_config(rc, spec)
    ens = run_cycles(spec, cc)
    est = estimate_invariant(ens)
    out = est.to_dict()
    out["aborted"] = ens.aborted
    out["mean_cycle_length"] = float(ens.lengths.mean())
    balls = [Ball(_point(b["center"], spec.dim, "center"), float(b["radius"]))
             for b in o["positivity_balls"]]
    if balls:
        out["positivity"] = positivity_check(est, balls, list(spec.regimes))
    checks = []
    for k, src in enumerate(o["time_average"]):
        g = expression_function(src, spec.dim, spec.num_regimes, Growth.bounded(1.0))
        val, se = est.integrate(g)
        ta, ta_se = time_average(spec, g, (np.asarray(cc.E.center), cc.l), float(o["T"]),
                                 int(o["n_paths"]), rc.sim, path_offset=10 ** 6 * (k + 1))
        checks.append({"g": src, "invariant": val, "invariant_se": se, "time_average": ta,
                       "time_average_se": ta_se,
                       "agree": abs(val - ta) <= 3 * math.hypot(se, ta_se)})
    out["time_average_checks"] = checks
    code = EXIT_OK if not ens.aborted and all(c["agree"] for c in checks) else EXIT_NEGATIVE
    return out, code, {"invariant.csv": est.to_csv()}


def _cmd_reproduce(rc, spec):
    o = rc.options
    # classification needs long horizons, so it runs on its own (coarser) step
    sim = SimConfig(float(o["dt"]), rc.sim.small_jump_cutoff, rc.sim.small_jump_mode,
                    rc.sim.envelope_index, rc.sim.envelope_cap, rc.sim.max_steps, rc.sim.seed)
    rows = []
    expected = {"example-5.3-diffusion": "transience-suspected",
                "example-5.3-stabilized": "positive-recurrent-evidence"}
    for fam, want in expected.items():
        model = builtin_model(fam)
        c = _classification(model, {"starts": None, "domains": None, "n_paths": o["n_paths"],
                                    "horizons": None}, sim)
        rows.append({"model": fam, "verdict": c.verdict, "expected": want,
                     "conflict": list(c.conflict) if c.conflict else None})
    table = "model,verdict\n" + "".join(f"{r['model']},{r['verdict']}\n" for r in rows)
    ok = all(r["verdict"] == r["expected"] for r in rows)
    return {"target": o["target"], "rows": rows}, (EXIT_OK if ok else EXIT_NEGATIVE), {"verdicts.csv": table}


HANDLERS = {"validate": _cmd_validate, "generator-eval": _cmd_generator_eval,
            "check-lyapunov": _cmd_check_lyapunov, "simulate": _cmd_simulate,
            "hitting": _cmd_hitting, "classify": _cmd_classify, "invariant": _cmd_invariant,
            "reproduce": _cmd_reproduce}


# -- output ---------------------------------------------------------------------


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(u) for k, u in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(u) for u in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _versions():
    import scipy
    return {"rsjd": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run(rc):
    """Execute one parsed config; returns the exit status."""
    os.makedirs(rc.output_dir, exist_ok=True)
    t0 = time.perf_counter()
    print(f"[rsjd] {rc.command}: start", file=sys.stderr)
    spec = build_model(rc.model) if rc.command != "reproduce" else None
    result, code, files = HANDLERS[rc.command](rc, spec)
    _write_json(os.path.join(rc.output_dir, "result.json"), result)
    for name, text in files.items():
        with open(os.path.join(rc.output_dir, name), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    manifest = {"manifest_version": 1, "command": rc.command, "seed": rc.seed,
                "config": rc.to_dict(), "versions": _versions(), "threads": rc.threads,
                "outputs": ["result.json"] + sorted(files), "exit_status": code,
                "wall_time_s": time.perf_counter() - t0}
    _write_json(os.path.join(rc.output_dir, "manifest.json"), manifest)
    print(f"[rsjd] {rc.command}: done, exit status {code}", file=sys.stderr)
    return code


def _parser():
    p = argparse.ArgumentParser(prog="rsjd", description="Regime-switching jump diffusion toolkit.")
    p.add_argument("command", nargs="?", choices=COMMANDS, help="command (overrides nothing; "
                   "must match the config's command when both are given)")
    p.add_argument("target", nargs="?", help="reproduce target, e.g. example-5.3")
    p.add_argument("--config", help="TOML config or a previous manifest.json")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads (results do not depend on it)")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    out = args.out or "rsjd-out"
    try:
        if args.config:
            rc = parse_config(args.config, args.seed, args.out, args.threads)
            if args.command and args.command != rc.command:
                raise ConfigError(f"command {args.command!r} conflicts with config command {rc.command!r}")
            if args.target and rc.command == "reproduce":
                rc.options["target"] = args.target
        elif args.command == "reproduce":
            data = {"format_version": FORMAT_VERSION, "command": "reproduce",
                    "reproduce": {"target": args.target or "example-5.3"}}
            rc = config_from_dict(data, args.seed, args.out, args.threads)
        else:
            raise ConfigError("give --config PATH, or the reproduce command")
        out = rc.output_dir
        return run(rc)
    except Exception as err:  # surfaced as error.json with status 1
        os.makedirs(out, exist_ok=True)
        payload = {"error": type(err).__name__, "message": str(err)}
        witness = getattr(err, "witness", None) or getattr(err, "point", None)
        if witness is not None:
            payload["witness"] = witness
        _write_json(os.path.join(out, "error.json"), payload)
        print(f"[rsjd] error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
