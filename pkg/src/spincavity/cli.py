"""Command-line front end.

Experiments are described by INI-style config files whose physical values
carry an explicit unit suffix, for example ``kappa = 9.8e5 rad_s`` or
``tau = 80 us``. Frequencies given in ``Hz``/``kHz``/``MHz`` are converted to
angular units with a factor ``2 pi``; ``rad_s`` values are used as they are.
A bare number where a unit is expected is rejected, as is a unit that does
not match the run mode (``dimensionless`` runs take ``dimensionless`` values).

Every run writes its artifacts atomically into ``--out`` together with
``manifest.json`` listing each file with its SHA-256.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
import traceback
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._io import atomic_write_text, format_float, sha256_file, write_csv
from .dynamics import Ensemble, IntegrationError, SystemParams, integrate
from .ensemble import EnsembleSpec, build_bins, cooperativity, effective_fwhm, n_eff

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

COMMANDS = ("simulate", "optimize", "echo", "cpmg", "map", "nmin-curve", "deconvolve",
            "fixtures")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


# ---------------------------------------------------------------------------
# Quantities with units
# ---------------------------------------------------------------------------

_RATE = {"Hz": 2 * math.pi, "kHz": 2e3 * math.pi, "MHz": 2e6 * math.pi, "rad_s": 1.0}
_TIME = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}
_ANGLE = {"rad": 1.0, "deg": math.pi / 180.0, "pi": math.pi}


def parse_quantity(text, kind, mode, name, many=False):
    """Parse ``"<number(s)> <unit>"`` for a quantity of ``kind``.

    ``kind`` is ``rate`` (angular), ``per_second`` (counts per second, no
    ``2 pi``), ``time``, ``scalar`` or ``angle``. With ``many`` several numbers
    may precede the unit and a list is returned.
    """
    parts = text.split()
    if len(parts) < 2:
        raise ConfigError(f"{name}: '{text}' needs a unit suffix "
                          f"({', '.join(_allowed(kind, mode))})")
    unit = parts[-1]
    nums = parts[:-1]
    if len(nums) > 1 and not many:
        raise ConfigError(f"{name}: expected one value, got '{text}'")
    allowed = _allowed(kind, mode)
    if unit not in allowed:
        raise ConfigError(f"{name}: unit '{unit}' not accepted here; use one of "
                          f"{', '.join(allowed)}")
    try:
        vals = [float(x) for x in nums]
    except ValueError:
        raise ConfigError(f"{name}: '{text}' is not a number followed by a unit") from None
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"{name}: values must be finite")
    if kind == "rate":
        scale = _RATE.get(unit, 1.0)
    elif kind == "time":
        scale = _TIME.get(unit, 1.0)
    elif kind == "angle":
        scale = _ANGLE[unit]
    else:
        scale = 1.0
    out = [v * scale for v in vals]
    return out if many else out[0]


def _allowed(kind, mode):
    if kind == "scalar":
        return ["dimensionless"]
    if kind == "angle":
        return list(_ANGLE)
    if mode == "dimensionless":
        return ["dimensionless"]
    if kind == "rate":
        return list(_RATE)
    if kind == "per_second":
        return ["Hz"]
    if kind == "time":
        return list(_TIME)
    raise ValueError(kind)


# key -> kind; "int", "bool", "str", "auto:<kind>" (value may be "auto")
SCHEMA = {
    "system": {"mode": "str", "kappa": "rate", "noise_dX": "scalar"},
    "ensemble": {"N_total": "int", "distribution": "str", "offset_lo": "rate",
                 "offset_hi": "rate", "offset_center": "rate", "offset_fwhm": "rate",
                 "g0": "rate", "g_spread": "scalar", "n_g": "int", "n_bins": "int",
                 "rep_rate": "per_second", "polarization": "str", "T1": "auto:time",
                 "T2": "auto:time", "file": "str"},
    "pulse": {"family": "str", "duration": "time", "angle": "angle", "file": "str",
              "excitation": "str"},
    "sequence": {"tau": "auto:time", "n_echoes": "int", "relaxation": "bool",
                 "back_action": "bool", "free_evolution": "time", "window": "auto:time",
                 "fwhm": "auto:rate", "record_every": "int"},
    "integrator": {"step": "auto:time", "step_free": "auto:time"},
    "simulate": {"t_end": "time", "relaxation": "bool", "record_every": "int"},
    "optimize": {"target": "str", "delta_lo": "scalar", "delta_hi": "scalar", "delta_n": "int",
                 "alpha_lo": "scalar", "alpha_hi": "scalar", "alpha_n": "int",
                 "budget": "int", "restarts": "int", "n_harmonics": "int", "p": "int",
                 "cosine_only": "bool", "n_steps": "int", "start": "str"},
    "map": {"target": "str", "delta_lo": "rate", "delta_hi": "rate", "delta_n": "int",
            "alpha_lo": "scalar", "alpha_hi": "scalar", "alpha_n": "int", "n_steps": "int"},
    "nmin_curve": {"durations": "list:time", "tau": "auto:time"},
}


@dataclass
class RunConfig:
    """Parsed experiment description."""

    command: str
    params: SystemParams
    values: dict
    source: str = ""
    ensemble_spec: EnsembleSpec | None = None
    ensemble_file: str | None = None
    seed: int = 0
    jobs: int = 1
    step: float | None = None
    out: str = "out"
    notes: list = field(default_factory=list)

    def get(self, section, key, default=None):
        return self.values.get(section, {}).get(key, default)


def _convert(raw, kind, mode, name):
    if kind.startswith("auto:"):
        if raw.strip() == "auto":
            return None
        kind = kind[5:]
    if kind.startswith("list:"):
        return parse_quantity(raw, kind[5:], mode, name, many=True)
    if kind == "str":
        return raw.strip()
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected an integer, got '{raw}'") from None
    if kind == "bool":
        v = raw.strip().lower()
        if v not in ("true", "false", "yes", "no", "on", "off", "1", "0"):
            raise ConfigError(f"{name}: expected true or false, got '{raw}'")
        return v in ("true", "yes", "on", "1")
    return parse_quantity(raw, kind, mode, name)


def load_config(path, command, seed=0, jobs=1, step=None, out="out") -> RunConfig:
    """Parse and validate a config file for ``command``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"--config: file not found: {path}")
        try:
            cp.read(path)
        except configparser.Error as e:
            raise ConfigError(f"--config: {e}") from None
    if path is None:
        # fixture verification needs no experiment description
        cp.read_string("[system]\nmode = dimensionless\nkappa = 4 dimensionless\n")
    if "system" not in cp:
        raise ConfigError("[system]: section missing")
    mode = cp["system"].get("mode", "").strip()
    if mode not in ("SI", "dimensionless"):
        raise ConfigError(f"system.mode: expected SI or dimensionless, got '{mode}'")
    values = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"[{sec}]: unknown section; known: {', '.join(SCHEMA)}")
        values[sec] = {}
        for key, raw in cp[sec].items():
            name = f"{sec}.{key}"
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{name}: unknown key")
            values[sec][key] = _convert(raw, SCHEMA[sec][key], mode, name)
    sysv = values["system"]
    if "kappa" not in sysv:
        raise ConfigError("system.kappa: missing")
    try:
        params = SystemParams(sysv["kappa"], mode, sysv.get("noise_dX", 0.5))
    except ValueError as e:
        raise ConfigError(f"[system]: {e}") from None
    cfg = RunConfig(command, params, values, source=path or "", seed=seed, jobs=jobs,
                    step=step, out=out)
    if command not in ("optimize", "fixtures", "deconvolve", "map"):
        _load_ensemble(cfg)
    if command == "deconvolve" and "ensemble" in values:
        _load_ensemble(cfg)
    return cfg


def _load_ensemble(cfg):
    e = cfg.values.get("ensemble")
    if e is None:
        raise ConfigError("[ensemble]: section missing")
    if "file" in e:
        if not os.path.isfile(e["file"]):
            raise ConfigError(f"ensemble.file: file not found: {e['file']}")
        cfg.ensemble_file = e["file"]
        return
    for key in ("N_total", "g0", "distribution"):
        if key not in e:
            raise ConfigError(f"ensemble.{key}: missing")
    dist = e["distribution"]
    if dist == "uniform":
        for key in ("offset_lo", "offset_hi"):
            if key not in e:
                raise ConfigError(f"ensemble.{key}: missing for a uniform distribution")
        od = ("uniform", e["offset_lo"], e["offset_hi"])
    elif dist == "lorentzian":
        for key in ("offset_center", "offset_fwhm"):
            if key not in e:
                raise ConfigError(f"ensemble.{key}: missing for a Lorentzian distribution")
        od = ("lorentzian", e["offset_center"], e["offset_fwhm"])
    else:
        raise ConfigError(f"ensemble.distribution: expected uniform or lorentzian, got '{dist}'")
    pol = e.get("polarization", "purcell")
    try:
        cfg.ensemble_spec = EnsembleSpec(
            e["N_total"], od, e["g0"], e.get("g_spread", 0.0), e.get("n_bins", 401),
            e.get("rep_rate"), e.get("T1") or math.inf, e.get("T2") or math.inf,
            e.get("n_g", 7), pol)
    except ValueError as err:
        raise ConfigError(f"[ensemble]: {err}") from None


# ---------------------------------------------------------------------------
# Experiment construction
# ---------------------------------------------------------------------------


def _g0(cfg):
    if cfg.ensemble_spec is not None:
        return cfg.ensemble_spec.g0
    g0 = cfg.get("ensemble", "g0")
    return 1.0 if g0 is None else g0


def _bins(cfg) -> Ensemble:
    if cfg.ensemble_file:
        return Ensemble.from_csv(cfg.ensemble_file)
    return build_bins(cfg.ensemble_spec, cfg.params)


def _pulse(cfg, angle=None, family=None):
    from .pulses import PulseError, load_pulse
    from .sequences import make_pulse

    family = family or cfg.get("pulse", "family")
    if family is None:
        raise ConfigError("pulse.family: missing")
    angle = angle if angle is not None else cfg.get("pulse", "angle", 0.5 * math.pi)
    duration = cfg.get("pulse", "duration")
    if family == "file":
        path = cfg.get("pulse", "file")
        if not path or not os.path.isfile(path):
            raise ConfigError(f"pulse.file: file not found: {path}")
        try:
            return load_pulse(path, g0=_g0(cfg), duration=duration)
        except (PulseError, ValueError) as e:
            raise ConfigError(f"pulse.file: {e}") from None
    if duration is None and family != "ideal":
        raise ConfigError("pulse.duration: missing")
    try:
        return make_pulse(family, angle, duration or 0.0, cfg.params, _g0(cfg))
    except PulseError as e:
        raise ConfigError(f"pulse.family: {e}") from None


def _fwhm(cfg):
    v = cfg.get("sequence", "fwhm")
    if v is not None:
        return v
    if cfg.ensemble_spec is not None:
        return effective_fwhm(cfg.ensemble_spec, cfg.params)
    return None


def _steps(cfg):
    step = cfg.step if cfg.step is not None else cfg.get("integrator", "step")
    free = cfg.get("integrator", "step_free")
    return step, free if free is not None else step


def _sequence_kw(cfg):
    seq = cfg.values.get("sequence", {})
    dt_pulse, dt_free = _steps(cfg)
    return dict(relaxation=seq.get("relaxation", False),
                back_action=seq.get("back_action", False),
                dt_pulse=dt_pulse, dt_free=dt_free, window=seq.get("window"),
                fwhm=_fwhm(cfg), record_every=seq.get("record_every", 1))


def _header(cfg):
    lines = [f"spincavity {__version__}", f"command={cfg.command}", f"seed={cfg.seed}",
             f"mode={cfg.params.mode}", f"kappa={format_float(cfg.params.kappa)}"]
    if cfg.source:
        lines.append(f"config={os.path.basename(cfg.source)}")
    return lines


def _kv_text(d):
    return "\n".join(f"{k} = {v}" for k, v in d.items()) + "\n"


# ---------------------------------------------------------------------------
# Commands; each returns the list of written files
# ---------------------------------------------------------------------------


def cmd_simulate(cfg):
    s = cfg.values.get("simulate", {})
    if "t_end" not in s:
        raise ConfigError("simulate.t_end: missing")
    ens = _bins(cfg)
    fam = cfg.get("pulse", "family", "none")
    drive = None if fam == "none" else [_pulse(cfg)]
    dt, _ = _steps(cfg)
    if dt is None:
        fast = max(cfg.params.kappa, float(np.max(np.abs(ens.delta), initial=0.0)))
        dt = 0.02 / fast
    tr = integrate(ens, drive, cfg.params, 0.0, s["t_end"], dt,
                   relaxation=s.get("relaxation", False), record_every=s.get("record_every", 1))
    path = os.path.join(cfg.out, "trajectory.csv")
    tr.to_csv(path, _header(cfg))
    summ = os.path.join(cfg.out, "summary.txt")
    atomic_write_text(summ, "\n".join(f"# {h}" for h in _header(cfg)) + "\n" + _kv_text(
        {"n_eff": format_float(n_eff(ens)), "n_bins": len(ens.delta), "step": format_float(dt),
         "samples": len(tr.times)}))
    return [path, summ]


def _write_sequence(cfg, res, extra):
    m = res.metrics
    files = []
    tpath = os.path.join(cfg.out, "trajectory.csv")
    res.trajectory.to_csv(tpath, _header(cfg))
    files.append(tpath)
    if res.drive is not None:
        dpath = os.path.join(cfg.out, "drive.csv")
        res.drive.to_csv(dpath, _header(cfg))
        files.append(dpath)
    epath = os.path.join(cfg.out, "echoes.csv")
    write_csv(epath, ["k", "t_echo", "window_lo", "window_hi", "snr", "peak"],
              [np.arange(1, len(m.per_echo_snr) + 1), m.echo_times,
               [w[0] for w in m.windows], [w[1] for w in m.windows], m.per_echo_snr, m.peaks],
              _header(cfg))
    files.append(epath)
    mpath = os.path.join(cfg.out, "metrics.txt")
    d = {"snr_total": m.snr_total, "n_spins": m.n_spins, "n_eff": m.n_eff, "n_min": m.n_min,
         "peak": m.peak, "m_r": m.m_r, "norm_drift": m.norm_drift}
    d = {k: format_float(v) if isinstance(v, float) else v for k, v in d.items()}
    d.update(extra)
    d["flags"] = "; ".join(m.flags) or "none"
    atomic_write_text(mpath, "\n".join(f"# {h}" for h in _header(cfg)) + "\n" + _kv_text(d))
    files.append(mpath)
    return files


def _excitation(cfg, default):
    from .sequences import IdealRotation
    exc = cfg.get("pulse", "excitation", default)
    if exc == "ideal":
        return IdealRotation(0.5 * math.pi)
    return _pulse(cfg, 0.5 * math.pi, family=None if exc == "same" else exc)


def cmd_echo(cfg):
    from .sequences import SequenceSpec, run_sequence
    ref = _pulse(cfg, math.pi)
    exc = _excitation(cfg, "same")
    tau = cfg.get("sequence", "tau")
    if tau is None:
        tau = 3.0 * max(ref.duration, exc.duration) + 40.0 / cfg.params.kappa
    try:
        spec = SequenceSpec(exc, ref, tau, **_sequence_kw(cfg))
    except ValueError as e:
        raise ConfigError(f"sequence.tau: {e}") from None
    res = run_sequence(spec, _bins(cfg), cfg.params, keep_states=False)
    extra = {"tau": format_float(tau)}
    fwhm = _fwhm(cfg)
    if fwhm:
        extra["fwhm"] = format_float(fwhm)
        extra["cooperativity"] = format_float(
            cooperativity(res.metrics.n_eff, _g0(cfg), cfg.params.kappa, fwhm))
    return _write_sequence(cfg, res, extra)


def cmd_cpmg(cfg):
    from .sequences import SequenceSpec, cpmg_period, run_sequence
    ref = _pulse(cfg, math.pi)
    exc = _excitation(cfg, "ideal")
    seq = cfg.values.get("sequence", {})
    tau = seq.get("tau")
    if tau is None:
        tau = 0.5 * cpmg_period(ref, seq.get("free_evolution", 13e-6), cfg.params.kappa,
                                cfg.params.noise_dX)
    try:
        spec = SequenceSpec(exc, ref, tau, n_echoes=seq.get("n_echoes", 100),
                            **_sequence_kw(cfg))
    except ValueError as e:
        raise ConfigError(f"sequence: {e}") from None
    res = run_sequence(spec, _bins(cfg), cfg.params, keep_states=False)
    return _write_sequence(cfg, res, {"period": format_float(2 * tau)})


def _target_from(o):
    from .optimizer import RobustnessTarget
    t = o.get("target", "pi/2")
    if t not in ("pi", "pi/2"):
        raise ConfigError(f"optimize.target: expected pi or pi/2, got '{t}'")
    return RobustnessTarget(t, (o.get("delta_lo", -30.0), o.get("delta_hi", 30.0),
                                o.get("delta_n", 21)),
                            (o.get("alpha_lo", 0.0), o.get("alpha_hi", 0.0), o.get("alpha_n", 1)),
                            n_steps=o.get("n_steps", 1000))


def cmd_optimize(cfg):
    from .fixtures import RAW_SETS, load_fixture
    from .optimizer import optimize
    from .pulses import load_pulse
    o = cfg.values.get("optimize", {})
    target = _target_from(o)
    start = o.get("start", "random")
    if start == "random":
        seed = None
    elif start.startswith("fixture:"):
        name = start.split(":", 1)[1]
        if name not in RAW_SETS:
            raise ConfigError(f"optimize.start: unknown fixture '{name}'")
        seed = load_fixture(name)
    elif os.path.isfile(start):
        seed = load_pulse(start)
    else:
        raise ConfigError(f"optimize.start: expected random, fixture:<name> or a file, "
                          f"got '{start}'")
    res = optimize(seed, target, budget=o.get("budget", 5000), restarts=o.get("restarts", 10),
                   rng_seed=cfg.seed, n_harmonics=o.get("n_harmonics", 7), p=o.get("p", 10),
                   cosine_only=o.get("cosine_only", False), jobs=cfg.jobs)
    files = res.write(cfg.out, "pulse")
    lpath = os.path.join(cfg.out, "log.csv")
    log = np.array(res.log, float).reshape(-1, 2)
    write_csv(lpath, ["evaluations", "best_F"], [log[:, 0], log[:, 1]], _header(cfg))
    return files + [lpath]


def cmd_map(cfg):
    from .optimizer import robustness_map
    m = cfg.values.get("map", {})
    pulse = _pulse(cfg)
    # offsets in units of 1/duration, as in the optimizer's default grid
    span = 30.0 / pulse.duration
    deltas = np.linspace(m.get("delta_lo", -span), m.get("delta_hi", span), m.get("delta_n", 61))
    alphas = np.linspace(m.get("alpha_lo", -0.3), m.get("alpha_hi", 0.3), m.get("alpha_n", 13))
    tgt = m.get("target", "none")
    if tgt not in ("none", "pi", "pi/2"):
        raise ConfigError(f"map.target: expected none, pi or pi/2, got '{tgt}'")
    kappa = cfg.params.kappa if pulse.kind == "square" else None
    rm = robustness_map(pulse, deltas, alphas, target=None if tgt == "none" else tgt,
                        g0=_g0(cfg), n_steps=m.get("n_steps", 1000), kappa=kappa)
    path = os.path.join(cfg.out, "map.csv")
    rm.to_csv(path, _header(cfg))
    return [path]


def cmd_nmin_curve(cfg):
    from .sequences import nmin_vs_duration
    c = cfg.values.get("nmin_curve", {})
    if "durations" not in c:
        raise ConfigError("nmin_curve.durations: missing")
    fam = cfg.get("pulse", "family")
    if fam not in ("square", "bump", "delta-robust", "g-robust"):
        raise ConfigError(f"pulse.family: '{fam}' cannot be stretched over durations")
    kw = _sequence_kw(cfg)
    kw.pop("window")
    curve = nmin_vs_duration(fam, c["durations"], _bins(cfg), cfg.params, _g0(cfg),
                             tau=c.get("tau"), jobs=cfg.jobs, **kw)
    path = os.path.join(cfg.out, "curve.csv")
    curve.to_csv(path, _header(cfg))
    return [path]


def cmd_deconvolve(cfg):
    from .pulses import PulseError, deconvolve
    pulse = _pulse(cfg)
    back = cfg.get("sequence", "back_action", False)
    ens = None
    if back:
        if cfg.ensemble_spec is None and cfg.ensemble_file is None:
            raise ConfigError("[ensemble]: needed for back_action")
        ens = _bins(cfg)
    step, _ = _steps(cfg)
    try:
        drive = deconvolve(pulse, cfg.params, ens, back_action=back, step=step)
    except PulseError as e:
        raise ConfigError(f"pulse.family: {e}") from None
    path = os.path.join(cfg.out, "drive.csv")
    drive.to_csv(path, _header(cfg))
    return [path]


def cmd_fixtures_verify(cfg):
    from .fixtures import verify_fixtures
    rows = verify_fixtures()
    path = os.path.join(cfg.out, "fixtures.csv")
    lines = [f"# {h}" for h in _header(cfg)] + ["name,F,published_F,threshold,ok"]
    for name, F, pub, thr, ok in rows:
        lines.append(f"{name},{format_float(F)},{pub},{thr},{str(bool(ok)).lower()}")
        print(f"{name:14s} F={F:.6f} published={pub} threshold={thr} "
              f"{'ok' if ok else 'FAIL'}")
    atomic_write_text(path, "\n".join(lines) + "\n")
    cfg.notes.append(all(r[4] for r in rows))
    return [path]


HANDLERS = {"simulate": cmd_simulate, "optimize": cmd_optimize, "echo": cmd_echo,
            "cpmg": cmd_cpmg, "map": cmd_map, "nmin-curve": cmd_nmin_curve,
            "deconvolve": cmd_deconvolve, "fixtures": cmd_fixtures_verify}


def write_manifest(out, config_path=None, seed=0):
    """List every file below ``out`` with size and SHA-256."""
    entries = []
    for root, _, files in os.walk(out):
        for f in files:
            full = os.path.join(root, f)
            rel = os.path.relpath(full, out).replace(os.sep, "/")
            if rel == "manifest.json" or f.startswith(".tmp-"):
                continue
            entries.append({"path": rel, "bytes": os.path.getsize(full),
                            "sha256": sha256_file(full)})
    entries.sort(key=lambda e: e["path"])
    doc = {"generator": f"spincavity {__version__}", "seed": seed, "files": entries}
    path = os.path.join(out, "manifest.json")
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def run(cfg: RunConfig) -> int:
    """Execute ``cfg``; returns the process exit status."""
    os.makedirs(cfg.out, exist_ok=True)
    if cfg.source:
        with open(cfg.source) as fh:
            atomic_write_text(os.path.join(cfg.out, "config.cfg"), fh.read())
    HANDLERS[cfg.command](cfg)
    write_manifest(cfg.out, cfg.source, cfg.seed)
    if cfg.command == "fixtures" and cfg.notes and not cfg.notes[-1]:
        return EXIT_NUMERIC
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="spincavity", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"spincavity {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "fixtures":
            p.add_argument("action", choices=["verify"])
        p.add_argument("--config", help="experiment config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=0, help="random seed (recorded in outputs)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--step", help="integrator step with unit, e.g. '0.01 us'")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs: must be at least 1")
        if args.config is None and args.command != "fixtures":
            raise ConfigError("--config: required for this command")
        cfg = load_config(args.config, args.command, seed=args.seed, jobs=args.jobs,
                          out=args.out)
        if args.step is not None:
            cfg.step = parse_quantity(args.step, "time", cfg.params.mode, "--step")
        return run(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, FloatingPointError, ArithmeticError, ValueError,
            np.linalg.LinAlgError, RuntimeError) as e:
        mod = _failing_module(e)
        print(f"numerical failure in {mod}: {e}", file=sys.stderr)
        return EXIT_NUMERIC


def _failing_module(exc):
    tb = traceback.extract_tb(exc.__traceback__)
    for frame in reversed(tb):
        base = os.path.splitext(os.path.basename(frame.filename))[0]
        if os.path.basename(os.path.dirname(frame.filename)) == "spincavity":
            return f"spincavity.{base.lstrip('_')}"
    return "spincavity"


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
