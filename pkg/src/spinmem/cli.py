"""``spinmem`` command line: batch runs of the memory experiments.

Every subcommand first resolves its flags into one JSON-serialisable
config, then executes that config.  The config is written verbatim to
``manifest.json``; ``spinmem replay manifest.json`` runs it again and
reproduces every output file byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import re
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, dsl
from .ensemble import EnsembleSpec, Models, echo_area, ensemble_signal
from .noise import SlowNoise
from .protocols import (
    CpmgOptions,
    MemoryOptions,
    detector_axis,
    fit_decay,
    fit_oscillation,
    initial_echo,
    memory_write_read,
    nuclear_echo_time,
    probe_cycle,
    probe_quadratures,
)
from .pulses import ErrorModel, PulseDurations
from .relaxation import lindblad_generator
from .sequence import Roles
from .spin import SystemParams
from .tomography import LABELS, TomographySettings, run_tomography

EXPERIMENTS = ("run", "memory", "probe", "t2n-sweep", "tomography")


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ parsing helpers

_UNIT = {"ns": 1e-9, "us": 1e-6, "ms": 1e-3, "s": 1.0, "": 1.0}


def parse_time(text: str) -> float:
    m = re.fullmatch(r"\s*([+-]?[\d.]+(?:[eE][+-]?\d+)?)\s*(ns|us|ms|s)?\s*", text)
    if not m:
        raise ConfigError(f"cannot read time {text!r}; use e.g. 10ms")
    return float(m.group(1)) * _UNIT[m.group(2) or ""]


def parse_times(text: str) -> list[float]:
    return [parse_time(t) for t in text.split(",") if t.strip()]


def parse_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_errors(text: str) -> dict:
    out = {"mw": 0.0, "rf": 0.0, "phase_jitter": 0.0}
    for part in text.split(","):
        if not part.strip():
            continue
        if "=" not in part:
            raise ConfigError(f"--errors expects key=value pairs, got {part!r}")
        k, v = (s.strip() for s in part.split("=", 1))
        if k not in out:
            raise ConfigError(f"unknown error key {k!r}")
        try:
            out[k] = float(v)
        except ValueError:
            raise ConfigError(f"bad value for {k}: {v!r}") from None
    return out


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


# ------------------------------------------------------------------ config

_DEFAULT_PACKETS = {"run": 1000, "memory": 1000, "probe": 512, "t2n-sweep": 256, "tomography": 1000}


def _params_section(path: str | None) -> dict:
    if path is None:
        return SystemParams.si_p().to_dict()
    data = _load_json(path)
    try:
        return SystemParams.from_dict(data).to_dict()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def build_config(args: argparse.Namespace) -> dict:
    exp = args.command
    params = _params_section(args.params)
    if args.gamma is not None:
        params["relaxation_rate"] = args.gamma
    seed = int(args.seed)
    if not 0 <= seed < 2**64:
        raise ConfigError("--seed must be an unsigned 64-bit integer")
    n = args.packets or _DEFAULT_PACKETS[exp]
    cfg = {
        "version": __version__,
        "experiment": exp,
        "seed": seed,
        "jobs": args.jobs,
        "params": params,
        "ensemble": {
            "t2e_star": args.t2e_star,
            "t2n_star": args.t2n_star,
            "n_packets": n,
            "seed": seed,
            "correlation": 0.0,
            "antithetic": exp == "probe",
        },
        "errors": parse_errors(args.errors) if args.errors else None,
        "noise": None,
        "relaxation": {"equilibrium": "thermal", "nuclear_dephasing": args.nuclear_dephasing},
        "durations": asdict(PulseDurations.ideal() if args.ideal_pulses else PulseDurations()),
        "memory": {
            "tau_e": args.tau_e,
            "a": args.a,
            "window": args.window,
            "composite_mw": "bb1" if args.bb1 else "none",
            "roles": args.roles,
            "cpmg": None,
        },
        "sweep": {},
    }
    if args.noise_t2 is not None:
        noise = SlowNoise.for_hahn_t2(args.noise_t2, args.noise_tau_c)
        cfg["noise"] = {"sigma": noise.sigma, "tau_c": noise.tau_c}
    if exp == "run":
        if not args.seq:
            raise ConfigError("run needs a sequence file (positional or --seq)")
        try:
            text = Path(args.seq).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read {args.seq}: {exc.strerror}") from None
        dsl.parse(text)  # fail early with a span-carrying diagnostic
        cfg["sweep"] = {"sequence_name": Path(args.seq).name, "sequence_text": text}
    elif exp == "memory":
        cfg["sweep"] = {"phi_e_deg": parse_floats(args.phi), "t_store": parse_times(args.store)}
    elif exp == "probe":
        cfg["sweep"] = {
            "phi_e_deg": parse_floats(args.phi),
            "delta_rf": args.delta_rf,
            "tau_n": parse_time(args.tau_n),
            "span": parse_time(args.span),
            "points": args.points,
        }
    elif exp == "t2n-sweep":
        stores = parse_times(args.store)
        if len(stores) < 4:
            raise ConfigError("t2n-sweep needs at least four storage times")
        cfg["sweep"] = {"t_store": stores}
        if args.cpmg_rate:
            cfg["memory"]["cpmg"] = {"rate": args.cpmg_rate, "n": 1, "convention": args.cpmg_phase}
    elif exp == "tomography":
        labels = [s.strip() for s in args.labels.split(",") if s.strip()]
        bad = [s for s in labels if s not in LABELS]
        if bad:
            raise ConfigError(f"unknown tomography labels {bad}")
        cfg["sweep"] = {"labels": labels, "tau_n": parse_time(args.tau_n)}
    return cfg


# ------------------------------------------------------------------ objects from config


def _objects(cfg: dict):
    params = SystemParams.from_dict(cfg["params"])
    e = cfg["ensemble"]
    spec = EnsembleSpec(e["t2e_star"], e["t2n_star"], e["n_packets"], e["seed"], e["correlation"], e["antithetic"])
    rel = cfg["relaxation"]
    gen = lindblad_generator(params, equilibrium=rel["equilibrium"], nuclear_dephasing=rel["nuclear_dephasing"])
    errors = ErrorModel(**cfg["errors"]) if cfg["errors"] else None
    noise = SlowNoise(**cfg["noise"]) if cfg["noise"] else None
    models = Models(generator=gen, errors=errors, noise=noise, seed=cfg["seed"])
    m = cfg["memory"]
    cp = CpmgOptions(**m["cpmg"]) if m["cpmg"] else None
    opts = MemoryOptions(
        tau_e=m["tau_e"], a=m["a"], window=m["window"], durations=PulseDurations(**cfg["durations"]),
        roles=Roles.preset(m["roles"]), composite_mw=m["composite_mw"], cpmg=cp,
    )
    return params, spec, models, opts


def _write_trace(path: Path, trace) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "re", "im"])
        for t, z in zip(trace.times, trace.signal):
            w.writerow([repr(float(t)), repr(float(z.real)), repr(float(z.imag))])


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _c(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


def execute(cfg: dict, out: Path) -> dict:
    """Run a resolved config, writing outputs into ``out``.  Returns a summary."""
    out.mkdir(parents=True, exist_ok=True)
    params, spec, models, opts = _objects(cfg)
    jobs = cfg["jobs"]
    exp = cfg["experiment"]
    sw = cfg["sweep"]
    summary: dict = {"experiment": exp}
    if exp == "run":
        seq = dsl.parse(sw["sequence_text"])
        tr = ensemble_signal(seq, spec, params, models, jobs)
        _write_trace(out / "trace_0.csv", tr)
        summary["echo_areas"] = [_c(echo_area(tr, w)) for w in tr.windows]
    elif exp == "memory":
        rows = []
        for deg in sw["phi_e_deg"]:
            phi = math.radians(deg)
            ref = ensemble_signal(initial_echo(phi, opts), spec, params, models, jobs)
            _write_trace(out / f"trace_reference_phi{deg:g}.csv", ref)
            a0 = echo_area(ref)
            for T in sw["t_store"]:
                tr = ensemble_signal(memory_write_read(phi, t_store=T, opts=opts), spec, params, models, jobs)
                _write_trace(out / f"trace_phi{deg:g}_store{T:g}.csv", tr)
                a1 = echo_area(tr)
                rows.append({
                    "phi_e_deg": deg, "t_store": T, "initial_area": _c(a0), "recovered_area": _c(a1),
                    "ratio": abs(a1) / abs(a0), "phase_error_deg": math.degrees(float(np.angle(a1 / a0))),
                })
        summary["echoes"] = rows
        _dump(out / "fit.json", {"echoes": rows})
    elif exp == "probe":
        summary.update(_probe(sw, opts, spec, params, models, jobs, out))
        _dump(out / "fit.json", summary)
    elif exp == "t2n-sweep":
        times, amps = [], []
        for T in sw["t_store"]:
            o = opts
            if opts.cpmg is not None:
                n = max(1, int(round(T * opts.cpmg.rate)))
                n += 1 - n % 2
                o = replace(opts, cpmg=replace(opts.cpmg, n=n))
                seq = memory_write_read(0.0, opts=o)
                T = o.cpmg.storage_time
            else:
                seq = memory_write_read(0.0, t_store=T, opts=o)
            tr = ensemble_signal(seq, spec, params, models, jobs)
            _write_trace(out / f"trace_store{T:g}.csv", tr)
            times.append(T)
            amps.append(abs(echo_area(tr)))
        fit = fit_decay(times, amps)
        summary["fit"] = fit.to_dict()
        summary["expected_t2n_relaxation_only"] = 2.0 / params.relaxation_rate if params.relaxation_rate else None
        _dump(out / "fit.json", summary)
    elif exp == "tomography":
        st = TomographySettings(opts, tau_n=sw["tau_n"])
        res = run_tomography(st, spec, params, models, sw["labels"], jobs)
        doc = json.loads(res.to_json())
        _dump(out / "tomography.json", doc)
        summary["mean_fidelity"] = doc["mean_fidelity"]
        summary["fidelities"] = {r["label"]: r["fidelity"] for r in doc["records"]}
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown experiment {exp!r}")
    _dump(out / "manifest.json", cfg)
    return summary


def _probe(sw, opts, spec, params, models, jobs, out: Path) -> dict:
    """Phase-cycled probe sweep; frequency from the unwrapped phase slope."""
    tn = sw["tau_n"]
    centre = nuclear_echo_time(tn, opts)
    rel = np.linspace(-sw["span"], sw["span"], sw["points"])
    fits, axis = [], None
    for deg in sw["phi_e_deg"]:
        d = probe_cycle(math.radians(deg), centre + rel, sw["delta_rf"], tn, opts, spec, params, models, jobs)
        if axis is None:
            axis = detector_axis(d)  # one detector calibration for the whole sweep
        q = probe_quadratures(d, axis)
        rows = "".join(f"{t!r},{x!r},{y!r}\n" for t, (x, y) in zip(centre + rel, q.tolist()))
        (out / f"trace_probe_phi{deg:g}.csv").write_text("t_s,re,im\n" + rows, encoding="utf-8")
        fits.append({"phi_e_deg": deg, **fit_oscillation(rel, d, axis).to_dict()})
    return {"nuclear_echo_time": centre, "delta_rf": sw["delta_rf"], "detector_axis": axis, "fits": fits}


# ------------------------------------------------------------------ argparse


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", help="SystemParams JSON file")
    common.add_argument("--seq", help="sequence file (.sps)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--packets", type=int, default=None, help="ensemble size")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("--gamma", type=float, default=None, help="override electron relaxation rate (1/s)")
    common.add_argument("--t2e-star", type=float, default=2e-6)
    common.add_argument("--t2n-star", type=float, default=100e-6)
    common.add_argument("--errors", help="angle errors, e.g. mw=0.05,rf=0.05")
    common.add_argument("--bb1", action="store_true", help="BB1 composite pulses for all mw pi pulses")
    common.add_argument("--ideal-pulses", action="store_true", help="instantaneous pulses")
    common.add_argument("--tau-e", type=float, default=30e-6)
    common.add_argument("--a", type=float, default=15e-6, help="refocus-to-rf spacing (s)")
    common.add_argument("--window", type=float, default=8e-6)
    common.add_argument("--roles", default="suppA", choices=["suppA", "fig1"])
    common.add_argument("--nuclear-dephasing", type=float, default=0.0, help="extra nuclear decay rate (1/s)")
    common.add_argument("--noise-t2", type=float, default=None, help="OU noise giving this Hahn T2 (s)")
    common.add_argument("--noise-tau-c", type=float, default=10e-3)

    p = argparse.ArgumentParser(prog="spinmem", description="Si:P electron-nuclear quantum memory simulator")
    p.add_argument("--version", action="version", version=f"spinmem {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run one .sps sequence")
    r.add_argument("seqfile", nargs="?", help="sequence file (alternative to --seq)")
    m = sub.add_parser("memory", parents=[common], help="write/store/read echoes")
    m.add_argument("--phi", default="0", help="phi_e values in degrees, comma separated")
    m.add_argument("--store", default="2ms", help="storage times, e.g. 2ms,10ms")
    pr = sub.add_parser("probe", parents=[common], help="nuclear coherence probe sweep")
    pr.add_argument("--phi", default="0,90,180,270")
    pr.add_argument("--delta-rf", type=float, default=2e3, help="probe carrier offset (Hz)")
    pr.add_argument("--tau-n", default="500us")
    pr.add_argument("--span", default="150us", help="half-width of the probe time sweep")
    pr.add_argument("--points", type=int, default=31)
    t = sub.add_parser("t2n-sweep", parents=[common], help="recovered echo vs storage time, fitted T2n")
    t.add_argument("--store", default="10ms,50ms,100ms,200ms,300ms")
    t.add_argument("--cpmg-rate", type=float, default=None, help="CPMG storage at this rate (Hz)")
    t.add_argument("--cpmg-phase", default="MG", choices=["MG", "CP"])
    tm = sub.add_parser("tomography", parents=[common], help="state tomography before and after storage")
    tm.add_argument("--labels", default="+X,-X,+Y,-Y,+Z,-Z")
    tm.add_argument("--tau-n", default="1ms")
    rp = sub.add_parser("replay", help="re-run a manifest.json")
    rp.add_argument("manifest")
    rp.add_argument("--out", default=None)
    return p


def _fail(exc: Exception, code: int = 2) -> int:
    err = {"type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, dsl.SeqError):
        err.update(exc.to_dict())
    sys.stderr.write(json.dumps({"error": err}) + "\n")
    return code


def main(argv=None) -> int:
    p = _parser()
    args = p.parse_args(argv)
    try:
        if args.command == "replay":
            cfg = _load_json(args.manifest)
            if cfg.get("experiment") not in EXPERIMENTS:
                raise ConfigError(f"{args.manifest}: not a spinmem manifest")
            out = Path(args.out) if args.out else Path(args.manifest).parent
        else:
            if args.command == "run" and args.seqfile:
                args.seq = args.seqfile
            cfg = build_config(args)
            out = Path(args.out)
        summary = execute(cfg, out)
    except (ConfigError, dsl.SeqError) as exc:
        return _fail(exc)
    except (ValueError, KeyError, TypeError) as exc:
        return _fail(exc)
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
