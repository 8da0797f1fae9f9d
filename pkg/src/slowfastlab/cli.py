# Command-line front door: configure, run, and serialize every analysis.
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import models, passage
from .continuation import continue_branch, detect_bifurcations, events_to_json, write_branch_csv
from .core import ParameterPoint, State
from .errors import ConfigurationError, SlowFastError
from .gspt import classify_folded_singularity
from .integrate import IntegratorOptions, integrate, write_trajectory_csv
from .models import fhn_hopf_equilibrium
from .spectra import dense_spectrum, fhn_spectrum_closed_form, partition

__all__ = ["RunConfig", "parse_config", "dispatch", "main"]

EXIT_OK = 0
EXIT_PIPELINE = 1
EXIT_CONFIG = 2
EXIT_IO = 3

_COMMANDS = ("simulate", "continue", "spectrum", "gspt-classify", "passage", "preset")

# key -> (type, validator, help); shared across file config and flags
_KEY_SPECS: dict[str, tuple] = {
    "preset": (str, lambda v: True, "model or passage preset name"),
    "name": (str, lambda v: True, "preset name for the preset command"),
    "all": (bool, lambda v: True, "run every passage preset"),
    "eps": (float, lambda v: v >= 0.0, "timescale separation (>= 0)"),
    "t_end": (float, lambda v: v > 0.0, "integration horizon"),
    "method": (str, lambda v: v in ("erk45_adaptive", "imex_cn_ab2"), "integrator"),
    "dt": (float, lambda v: v > 0.0, "fixed step for imex"),
    "rel_tol": (float, lambda v: 1e-14 <= v <= 1e-2, "relative tolerance"),
    "abs_tol": (float, lambda v: 1e-14 <= v <= 1e-2, "absolute tolerance"),
    "max_step": (float, lambda v: v > 0.0, "maximum step"),
    "n_points": (int, lambda v: v >= 8 and v % 2 == 0, "grid resolution"),
    "v0": (float, lambda v: True, "initial slow value"),
    "v_from": (float, lambda v: True, "continuation window start"),
    "v_to": (float, lambda v: True, "continuation window end"),
    "ds": (float, lambda v: v > 0.0, "initial arclength step"),
    "a": (float, lambda v: 0.0 < v < 1.0, "FHN spectral parameter a = b"),
    "n_max": (int, lambda v: v >= 0, "largest wavenumber for spectra"),
    "j11": (float, lambda v: True, "folded-singularity J11"),
    "j12": (float, lambda v: True, "folded-singularity J12"),
    "j21": (float, lambda v: True, "folded-singularity J21"),
    "output_dir": (str, lambda v: True, "output directory"),
}

_ALLOWED: dict[str, set] = {
    "simulate": {"preset", "eps", "t_end", "method", "dt", "rel_tol", "abs_tol",
                 "max_step", "n_points", "v0", "output_dir"},
    "continue": {"preset", "v_from", "v_to", "ds", "n_points", "output_dir"},
    "spectrum": {"preset", "a", "n_max", "n_points", "output_dir"},
    "gspt-classify": {"j11", "j12", "j21", "output_dir"},
    "passage": {"preset", "n_points", "output_dir"},
    "preset": {"name", "all", "n_points", "output_dir"},
}

_REQUIRED: dict[str, set] = {
    "simulate": {"preset"},
    "continue": {"preset", "v_from", "v_to"},
    "spectrum": {"preset"},
    "gspt-classify": {"j11", "j12", "j21"},
    "passage": {"preset"},
    "preset": set(),
}


@dataclass
class RunConfig:
    command: str
    options: dict = field(default_factory=dict)
    output_dir: str = ""

    def to_dict(self) -> dict:
        out = {"command": self.command, "output_dir": self.output_dir}
        out.update({k: self.options[k] for k in sorted(self.options)})
        return out


def _coerce(key: str, value, where: str):
    typ, validate, _ = _KEY_SPECS[key]
    try:
        if typ is bool:
            if isinstance(value, str):
                value = value.lower() in ("1", "true", "yes")
            coerced = bool(value)
        else:
            coerced = typ(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{where}: key '{key}' expects {typ.__name__}, got {value!r}") from exc
    if not validate(coerced):
        raise ConfigurationError(f"{where}: key '{key}' value {coerced!r} out of range")
    return coerced


def parse_config(argv: list[str]) -> RunConfig:
    """Resolve a RunConfig from flags plus an optional JSON config file; flags
    override file values, unknown keys are rejected, and numeric values are
    validated at parse time."""
    parser = argparse.ArgumentParser(prog="slowfast", add_help=True, description=__doc__)
    parser.add_argument("command", choices=_COMMANDS)
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--out", dest="output_dir", default=None)
    for key, (typ, _, msg) in _KEY_SPECS.items():
        if key == "output_dir":
            continue
        flag = "--" + key.replace("_", "-")
        if typ is bool:
            parser.add_argument(flag, dest=key, action="store_true", default=None, help=msg)
        else:
            parser.add_argument(flag, dest=key, default=None, help=msg)
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code not in (0, None):
            raise ConfigurationError("could not parse command line") from None
        raise
    command = ns.command
    allowed = _ALLOWED[command]

    resolved: dict = {}
    if ns.config is not None:
        try:
            with open(ns.config) as fh:
                payload = json.load(fh)
        except OSError as exc:
            raise OSError(f"cannot read config file {ns.config!r}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {ns.config!r} is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigurationError("config file must contain a JSON object")
        for key, value in payload.items():
            if key == "command":
                if value != command:
                    raise ConfigurationError(
                        f"config file command {value!r} conflicts with {command!r}")
                continue
            if key == "output_dir":
                resolved["output_dir"] = str(value)
                continue
            if key not in allowed:
                raise ConfigurationError(f"config file: unknown key '{key}' for command {command!r}")
            resolved[key] = _coerce(key, value, "config file")

    for key in _KEY_SPECS:
        if key == "output_dir":
            continue
        value = getattr(ns, key, None)
        if value is None:
            continue
        if key not in allowed:
            raise ConfigurationError(f"flag --{key.replace('_', '-')} not valid for {command!r}")
        resolved[key] = _coerce(key, value, "flags")
    if ns.output_dir is not None:
        resolved["output_dir"] = ns.output_dir

    missing = _REQUIRED[command] - set(resolved)
    if command == "preset" and not (resolved.get("all") or resolved.get("name")):
        raise ConfigurationError("preset command needs --name or --all")
    if missing:
        raise ConfigurationError(
            f"command {command!r} is missing required option(s): {', '.join(sorted(missing))}")

    out_root = resolved.pop("output_dir", None) or os.environ.get("SLOWFAST_OUT") or "out"
    tag = resolved.get("preset") or resolved.get("name") or ("all" if resolved.get("all") else "run")
    output_dir = os.path.join(out_root, f"{command.replace('-', '_')}-{tag}")
    return RunConfig(command=command, options=resolved, output_dir=output_dir)


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _echo_config(config: RunConfig) -> None:
    os.makedirs(config.output_dir, exist_ok=True)
    _write_json(os.path.join(config.output_dir, "config.resolved.json"), config.to_dict())


def _cmd_simulate(config: RunConfig) -> dict:
    opts = config.options
    mp = models.preset(opts["preset"], n_points=opts.get("n_points"))
    system = models.build_model(mp)
    eps = opts.get("eps", 1e-3)
    ref = system.reference
    v = np.array(ref.v)
    if "v0" in opts:
        v = v.copy()
        v[0] = opts["v0"]
    state0 = State(0.0, ref.u, v)
    integ = IntegratorOptions(
        t_end=opts.get("t_end", 100.0),
        method=opts.get("method", "erk45_adaptive" if system.info.get("grid") is None
                        else "imex_cn_ab2"),
        rel_tol=opts.get("rel_tol", 1e-6), abs_tol=opts.get("abs_tol", 1e-9),
        max_step=opts.get("max_step", 0.5), dt=opts.get("dt", 0.02),
        dense_every=10)
    params = ParameterPoint(eps=eps)
    if system.delay_spec is not None:
        from .integrate import integrate_dde
        u0 = float(ref.u[0])
        traj = integrate_dde(system, lambda t: u0, v, params, integ)
    else:
        traj = integrate(system, state0, params, integ)
    write_trajectory_csv(traj, os.path.join(config.output_dir, "trajectory.csv"))
    return {
        "command": "simulate", "preset": opts["preset"], "eps": eps,
        "t_final": float(traj.times[-1]),
        "u_norm_final": float(traj.u_norms()[-1]),
        "v_final": [float(x) for x in traj.vs[-1]],
    }


def _cmd_continue(config: RunConfig) -> dict:
    opts = config.options
    mp = models.preset(opts["preset"], n_points=opts.get("n_points"))
    system = models.build_model(mp)
    params = ParameterPoint(eps=0.0)
    v_from, v_to = opts["v_from"], opts["v_to"]
    if opts["preset"] == "dde":
        layer = system.info["layer_system"]
        u0 = np.array([system.info["layer_equilibrium"](v_from)])
        branch = continue_branch(layer, u0, (v_from, v_to), params, opts.get("ds", 0.02))
        events = detect_bifurcations(layer, branch, params)
    elif opts["preset"] == "neural_field":
        u0 = system.info["down_state"](v_from)
        branch = continue_branch(system, u0, (v_from, v_to), params, opts.get("ds", 0.03))
        events = detect_bifurcations(system, branch, params)
    else:
        comp = system.info["homogeneous_equilibrium"](v_from)
        n_nodes = system.info["grid"].n_points
        u0 = np.concatenate([np.full(n_nodes, c) for c in comp])
        branch = continue_branch(system, u0, (v_from, v_to), params, opts.get("ds", 0.02))
        modes = range(0, 10) if "dispersion" in system.info else None
        events = detect_bifurcations(system, branch, params, turing_modes=modes)
    write_branch_csv(branch, os.path.join(config.output_dir, "branch.csv"))
    with open(os.path.join(config.output_dir, "events.json"), "w") as fh:
        fh.write(events_to_json(events))
    return {
        "command": "continue", "preset": opts["preset"],
        "n_points_branch": len(branch.points),
        "events": [e.to_dict() for e in events],
    }


def _cmd_spectrum(config: RunConfig) -> dict:
    opts = config.options
    name = opts["preset"]
    n_max = opts.get("n_max", 64)
    if name == "fhn":
        a = opts.get("a", 0.1)
        n_points = opts.get("n_points", 256)
        mp = models.preset("fhn", n_points=n_points, d1=1.0, b=a)
        system = models.build_model(mp)
        from .core import jacobian_u
        J = jacobian_u(system, system.reference, ParameterPoint(eps=0.0))
        eigs = dense_spectrum(J)
        report_spec = partition(eigs)
        oracle = fhn_spectrum_closed_form(a, n_max)
        errs = []
        for lam in oracle:
            if lam == -a and lam.imag == 0.0:
                continue  # essential accumulation point, not a discrete eigenvalue
            errs.append(float(np.min(np.abs(eigs - lam)) / (1.0 + abs(lam))))
        extra = {"a": a, "closed_form_max_error": max(errs),
                 "hopf_pair": [[z.real, z.imag] for z in report_spec.centre_eigenvalues()]}
    else:
        mp = models.preset(name, n_points=opts.get("n_points"))
        system = models.build_model(mp)
        from .core import jacobian_u
        J = jacobian_u(system, system.reference, ParameterPoint(eps=0.0))
        if J.shape[0] > 2048:
            raise ConfigurationError("spectrum command limited to n_fast <= 2048")
        eigs = dense_spectrum(J)
        report_spec = partition(eigs)
        extra = {}
    _write_json(os.path.join(config.output_dir, "spectrum.json"), report_spec.to_dict())
    out = {"command": "spectrum", "preset": name, "gamma": report_spec.gamma,
           "n_unstable": len(report_spec.sigma_u), "n_centre": len(report_spec.sigma_c)}
    out.update(extra)
    return out


def _cmd_gspt_classify(config: RunConfig) -> dict:
    opts = config.options
    cls = classify_folded_singularity(opts["j11"], opts["j12"], opts["j21"])
    print(cls.label)
    return {"command": "gspt-classify", **cls.to_dict()}


def _cmd_passage(config: RunConfig) -> dict:
    opts = config.options
    result = passage.run_preset_experiment(
        opts["preset"], output_dir=config.output_dir, n_points=opts.get("n_points"))
    return {"command": "passage", **result.report}


def _cmd_preset(config: RunConfig) -> dict:
    opts = config.options
    names = list(passage.PRESET_NAMES) if opts.get("all") else [opts["name"]]
    summaries = {}
    if len(names) > 1:
        with ThreadPoolExecutor(max_workers=min(4, len(names))) as pool:
            futures = {
                name: pool.submit(passage.run_preset_experiment, name,
                                  os.path.join(config.output_dir, name),
                                  opts.get("n_points"))
                for name in names
            }
            for name, fut in futures.items():
                summaries[name] = fut.result().report
    else:
        name = names[0]
        summaries[name] = passage.run_preset_experiment(
            name, os.path.join(config.output_dir, name), opts.get("n_points")).report
    return {"command": "preset", "presets": summaries}


def dispatch(config: RunConfig) -> int:
    """Run the configured pipeline; writes report.json (and a separate
    run_meta.json carrying the wall-clock) under output_dir."""
    _echo_config(config)
    started = time.time()
    handler = {
        "simulate": _cmd_simulate,
        "continue": _cmd_continue,
        "spectrum": _cmd_spectrum,
        "gspt-classify": _cmd_gspt_classify,
        "passage": _cmd_passage,
        "preset": _cmd_preset,
    }[config.command]
    report = handler(config)
    _write_json(os.path.join(config.output_dir, "report.json"), report)
    _write_json(os.path.join(config.output_dir, "run_meta.json"),
                {"elapsed_seconds": time.time() - started})
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        print("usage: slowfast {simulate,continue,spectrum,gspt-classify,passage,preset} [options]",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = parse_config(argv)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return dispatch(config)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SlowFastError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except Exception as exc:  # pragma: no cover - unexpected
        print(f"pipeline error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
