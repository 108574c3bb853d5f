"""Command-line front end: ``ptfeeder <subcommand> [options]``.

Every run writes its artifacts (CSV with 17 significant digits, JSON
summaries) plus ``manifest.json`` into one output directory. The directory
defaults to ``runs/<subcommand>`` and can be redirected with the
``PTFEEDER_OUTPUT_DIR`` environment variable or ``--output-dir``.

Exit codes: 0 ok, 2 configuration error, 3 solver non-convergence,
4 propagation abort, 1 anything else.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .core import Grid, PTFeederError, WellSystem, write_field_csv, write_fields_csv
from .feeder import (bound_feeder_phase_defect, build_bound_feeder, build_single_unbound_feeder,
                     build_two_feeder_system, trace_psi_c_locus)
from .propagator import (DEFAULT_MS_PER_UNIT, PropagationAbort, PropagationConfig,
                         PropagationConfigError, propagate, reduced_to_si_time)
from .stationary import (BRANCHES, DivergenceError, NoConvergenceError, check_invariants,
                         default_grid, find_state, locate_critical, seed_state, spectrum_sweep)

log = logging.getLogger("ptfeeder")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_SOLVER, EXIT_ABORT = 0, 1, 2, 3, 4
OUTPUT_ENV = "PTFEEDER_OUTPUT_DIR"


class ConfigError(PTFeederError):
    pass


# -- configuration -----------------------------------------------------------------

@dataclass
class WellConfig:
    a: float = 1.1
    V: float = -1.0
    gamma: float = 0.1
    g: float = 1.0


@dataclass
class GridConfig:
    half_width: float = 40.0
    n_bins: int = 16384


@dataclass
class SolverConfig:
    critical_tol: float = 1e-5
    coarse_step: float = 0.01
    gamma_max: float = 2.0


@dataclass
class FeederConfig:
    mode: str = "two"              # two | single | bound-check
    branch: str = "ground"
    amplitude: float = 0.3         # psi2(a) = psi3(-a) for the two-feeder system
    amplitude_out: float | None = None
    psi2_at_0: float = 0.2         # single unbound feeder


@dataclass
class ExperimentConfig:
    well: WellConfig = field(default_factory=WellConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    propagation: dict = field(default_factory=dict)
    feeder: FeederConfig = field(default_factory=FeederConfig)
    output_dir: str = "runs"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        s = self.solver
        for name in ("critical_tol", "coarse_step", "gamma_max"):
            if not getattr(s, name) > 0:
                raise ConfigError(f"solver.{name} must be positive")
        if self.feeder.mode not in ("two", "single", "bound-check"):
            raise ConfigError(f"unknown feeder mode {self.feeder.mode!r}")
        if self.feeder.branch not in ("ground", "excited"):
            raise ConfigError("feeders are built for the ground or excited branch")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            Grid.symmetric(self.grid.half_width, self.grid.n_bins, anchor=self.well.a)
            WellSystem(**asdict(self.well))
            self.propagation_config()
        except (PTFeederError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def propagation_config(self) -> PropagationConfig:
        try:
            return PropagationConfig(**self.propagation)
        except TypeError as exc:
            raise ConfigError(f"bad propagation settings: {exc}") from exc

    def well_system(self) -> WellSystem:
        return WellSystem(**asdict(self.well))

    def make_grid(self) -> Grid:
        return default_grid(self.well_system(), self.grid.half_width, self.grid.n_bins)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        parts = {"well": WellConfig, "grid": GridConfig, "solver": SolverConfig,
                 "feeder": FeederConfig}
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kw = {}
        for k, v in d.items():
            if k in parts:
                if not isinstance(v, dict):
                    raise ConfigError(f"section {k!r} must be a mapping")
                sub_known = {f.name for f in fields(parts[k])}
                bad = set(v) - sub_known
                if bad:
                    raise ConfigError(f"unknown keys in {k}: {sorted(bad)}")
                kw[k] = parts[k](**v)
            else:
                kw[k] = v
        return cls(**kw)

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serializable: {type(o).__name__}")


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return ExperimentConfig.from_dict(data)


# -- helpers -------------------------------------------------------------------------

def parse_range(text: str) -> np.ndarray:
    """``start:stop:step`` (stop included when hit) or a single value."""
    try:
        parts = [float(p) for p in text.split(":")]
    except ValueError as exc:
        raise ConfigError(f"bad range {text!r}") from exc
    if len(parts) == 1:
        return np.array(parts)
    if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
        raise ConfigError(f"range must be start:stop:step with step > 0, got {text!r}")
    start, stop, step = parts
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(n), 12)


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _versions() -> dict:
    import numba
    import scipy

    return {"ptfeeder": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def _output_dir(args, cfg: ExperimentConfig) -> Path:
    base = args.output_dir or os.environ.get(OUTPUT_ENV) or cfg.output_dir
    out = Path(base) / args.command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    well = cfg.well
    for name in ("a", "V", "gamma", "g"):
        v = getattr(args, name, None)
        if name == "gamma" and args.command == "spectrum":
            continue
        if v is not None:
            well = replace(well, **{name: v})
    grid = cfg.grid
    if getattr(args, "n_bins", None) is not None:
        grid = replace(grid, n_bins=args.n_bins)
    if getattr(args, "half_width", None) is not None:
        grid = replace(grid, half_width=args.half_width)
    prop = dict(cfg.propagation)
    for key, attr in (("coupling_mode", "mode"), ("dt", "dt"), ("t_final", "t_final")):
        v = getattr(args, attr, None)
        if v is not None:
            prop[key] = v
    if getattr(args, "absorb", None) is not None:
        prop["boundary"] = "absorbing" if args.absorb == "on" else "none"
    if getattr(args, "boundary", None) is not None:
        prop["boundary"] = args.boundary
    feeder = cfg.feeder
    for key, attr in (("mode", "feeder_mode"), ("amplitude", "amplitude"),
                      ("psi2_at_0", "psi2_at_0"), ("branch", "branch")):
        v = getattr(args, attr, None)
        if v is not None and not (key == "branch" and args.command == "state"):
            feeder = replace(feeder, **{key: v})
    return ExperimentConfig(well, grid, cfg.solver, prop, feeder, cfg.output_dir, cfg.seed,
                            getattr(args, "workers", None) or cfg.workers)


# -- subcommands -----------------------------------------------------------------------

def cmd_state(cfg, args, out):
    system, grid = cfg.well_system(), cfg.make_grid()
    branch = args.branch or "ground"
    if branch in ("ground", "excited"):
        st = seed_state(system, branch, grid)
    else:
        guess = complex(args.mu_guess) if args.mu_guess else complex(-0.4, 0.1 if branch == "broken_plus" else -0.1)
        st = find_state(system, guess, branch, grid=grid)
    rep = check_invariants(st, strict=False)
    write_field_csv(out / "state.csv", st.field)
    res = {"mu": [st.mu.real, st.mu.imag], "branch": st.branch, "residual": st.residual,
           "invariants": rep}
    write_json(out / "state.json", res)
    return res


def cmd_spectrum(cfg, args, out):
    template = cfg.well_system()
    gammas = parse_range(args.gamma)
    crit = locate_critical(template, cfg.make_grid(), cfg.solver.gamma_max,
                           cfg.solver.coarse_step, cfg.solver.critical_tol)
    sp = spectrum_sweep(template, gammas, cfg.make_grid(), critical=crit)
    rows = []
    for name in BRANCHES:
        br = sp[name]
        resid = [st.residual for st in br.states] if len(br.states) == len(br) else [np.nan] * len(br)
        rows += [(float(gm), name, mu.real, mu.imag, r)
                 for gm, mu, r in zip(br.gamma_values, br.mu_values, resid)]
    rows.sort(key=lambda row: (row[0], BRANCHES.index(row[1])))
    with open(out / "spectrum.csv", "w") as fh:
        fh.write("gamma,branch,mu_re,mu_im,residual\n")
        for gm, name, re_, im_, r in rows:
            fh.write(f"{gm:.17g},{name},{re_:.17g},{im_:.17g},{r:.17g}\n")
    res = {"gamma_c": crit.gamma_c, "gamma_c_star": crit.gamma_c_star,
           "bracket_width": crit.bracket_width,
           "points": {name: len(sp[name]) for name in BRANCHES}}
    write_json(out / "spectrum.json", res)
    return res


def cmd_critical(cfg, args, out):
    crit = locate_critical(cfg.well_system(), cfg.make_grid(), cfg.solver.gamma_max,
                           cfg.solver.coarse_step, cfg.solver.critical_tol)
    res = {"gamma_c": crit.gamma_c, "gamma_c_star": crit.gamma_c_star,
           "bracket_width": crit.bracket_width,
           "gamma_c_bracket": list(crit.gamma_c_bracket),
           "gamma_c_star_bracket": list(crit.gamma_c_star_bracket),
           "parameters": {"a": cfg.well.a, "V": cfg.well.V, "g": cfg.well.g,
                          "n_bins": cfg.grid.n_bins, "half_width": cfg.grid.half_width}}
    write_json(out / "critical.json", res)
    return res


def build_feeders(cfg: ExperimentConfig):
    fc = cfg.feeder
    st = seed_state(cfg.well_system(), fc.branch, cfg.make_grid())
    if fc.mode == "two":
        amp_out = fc.amplitude if fc.amplitude_out is None else fc.amplitude_out
        cs = build_two_feeder_system(st, fc.amplitude, amp_out)
    elif fc.mode == "single":
        cs = build_single_unbound_feeder(st, fc.psi2_at_0)
    else:
        cs = build_bound_feeder(st)
    return st, cs


def cmd_feeders(cfg, args, out):
    st, cs = build_feeders(cfg)
    write_fields_csv(out / "system.csv", cs.grid, cs.waves, cs.names)
    gam = [c.gamma for c in cs.couplings]
    res = {"gamma": gam[0], "gamma_tilde": gam[-1], "mu": [cs.mu.real, cs.mu.imag],
           "residuals": cs.coupling_residuals(), "phase_errors": cs.phase_errors(),
           "phase_defect": bound_feeder_phase_defect(st), "manifest": cs.manifest()}
    write_json(out / "feeders.json", res)
    return res


def cmd_phase_locus(cfg, args, out):
    gs = parse_range(args.g_range)
    pts = trace_psi_c_locus(cfg.well.a, cfg.well.V, gs, cfg.make_grid(),
                            with_critical=not args.no_critical, skip_missing=True,
                            workers=cfg.workers)
    with open(out / "locus.csv", "w") as fh:
        fh.write("g,gamma,mu_re,mu_im,defect,gamma_c,gamma_c_star,region\n")
        for p in pts:
            fh.write(f"{p.g:.17g},{p.gamma:.17g},{p.mu.real:.17g},{p.mu.imag:.17g},"
                     f"{p.defect:.17g},{p.gamma_c:.17g},{p.gamma_c_star:.17g},{p.region}\n")
    res = {"points": len(pts), "requested": len(gs),
           "gamma": [p.gamma for p in pts], "g": [p.g for p in pts]}
    write_json(out / "locus.json", res)
    return res


def cmd_evolve(cfg, args, out):
    pc = cfg.propagation_config()
    if args.snapshot_every:
        pc = replace(pc, snapshot_stride=args.snapshot_every)
    _, cs = build_feeders(cfg)
    try:
        rec = propagate(cs, pc)
    except PropagationAbort as exc:
        if exc.record is not None:
            _write_record(out, exc.record)
        raise
    _write_record(out, rec)
    res = rec.summary(args.scale or DEFAULT_MS_PER_UNIT)
    write_json(out / "summary.json", res)
    return res


def _write_record(out: Path, rec):
    names = list(rec.names) or [f"psi{i + 1}" for i in range(rec.norms_per_wave.shape[1])]
    cols = [rec.times[:, None], rec.norms_per_wave, rec.overlap_with_initial, rec.peak_drift[:, None]]
    header = ["t", *[f"norm_{n}" for n in names], *[f"overlap_{n}" for n in names], "peak_drift"]
    with open(out / "record.csv", "w") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, np.hstack(cols), fmt="%.17g", delimiter=",")
    if rec.snapshots:
        frames = out / "frames"
        frames.mkdir(exist_ok=True)
        for k, (t, psi) in enumerate(rec.snapshots):
            with open(frames / f"frame_{k:05d}.csv", "w") as fh:
                fh.write(f"# t={t:.17g}\n")
                fh.write(",".join(f"abs2_{n}" for n in names) + "\n")
                np.savetxt(fh, (np.abs(psi) ** 2).T, fmt="%.17g", delimiter=",")


def cmd_convert_time(cfg, args, out):
    ms = reduced_to_si_time(args.t_reduced, args.scale or DEFAULT_MS_PER_UNIT)
    res = {"t_reduced": args.t_reduced, "scale_ms_per_unit": args.scale or DEFAULT_MS_PER_UNIT,
           "ms": ms}
    write_json(out / "time.json", res)
    return res


COMMANDS = {"state": cmd_state, "spectrum": cmd_spectrum, "critical": cmd_critical,
            "feeders": cmd_feeders, "phase-locus": cmd_phase_locus, "evolve": cmd_evolve,
            "convert-time": cmd_convert_time}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ptfeeder", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--output-dir", help=f"artifact root (env {OUTPUT_ENV} also works)")
        sp.add_argument("--a", type=float)
        sp.add_argument("--V", type=float)
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--g", type=float)
        sp.add_argument("--n-bins", type=int)
        sp.add_argument("--half-width", type=float)
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    sp = common(sub.add_parser("state", help="one stationary state"))
    sp.add_argument("--branch", choices=BRANCHES)
    sp.add_argument("--mu-guess", help="complex start value, e.g. '-0.4+0.1j'")

    sp = sub.add_parser("spectrum", help="mu(Gamma) for all branches")
    common(sp)
    sp._option_string_actions["--gamma"].type = str
    sp._option_string_actions["--gamma"].help = "start:stop:step"

    common(sub.add_parser("critical", help="Gamma_c and Gamma_c*"))

    sp = common(sub.add_parser("feeders", help="build a Hermitian environment"))
    sp.add_argument("--mode", dest="feeder_mode", choices=("two", "single", "bound-check"))
    sp.add_argument("--branch", choices=("ground", "excited"))
    sp.add_argument("--amplitude", type=float)
    sp.add_argument("--psi2-at-0", type=float)

    sp = common(sub.add_parser("phase-locus", help="bound-feeder locus in (g, Gamma)"))
    sp.add_argument("--g-range", default="0:2:0.5", help="start:stop:step")
    sp.add_argument("--no-critical", action="store_true")
    sp.add_argument("--workers", type=int)

    sp = common(sub.add_parser("evolve", help="time evolution of a coupled system"))
    sp.add_argument("--mode", choices=("exact-kick", "effective-potential"))
    sp.add_argument("--feeder-mode", choices=("two", "single", "bound-check"))
    sp.add_argument("--branch", choices=("ground", "excited"))
    sp.add_argument("--amplitude", type=float)
    sp.add_argument("--psi2-at-0", type=float)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--t-final", type=float)
    sp.add_argument("--absorb", choices=("on", "off"))
    sp.add_argument("--boundary", choices=("none", "absorbing", "reservoir"),
                    help="feeder edge treatment; overrides --absorb")
    sp.add_argument("--snapshot-every", type=int, default=0, help="records between frames")
    sp.add_argument("--scale", type=float, help="ms per reduced time unit")

    sp = sub.add_parser("convert-time", help="reduced time to milliseconds")
    sp.add_argument("t_reduced", type=float)
    sp.add_argument("--scale", type=float, help="ms per reduced unit (default 123/45)")
    sp.add_argument("--output-dir")
    sp.add_argument("--config")
    sp.add_argument("-v", "--verbose", action="store_true")
    return p


def _error(code: int, exc: Exception) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}),
          file=sys.stderr)
    return code


def run_subcommand(argv=None) -> int:
    t0 = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise ConfigError(f"a subcommand is required: {sorted(COMMANDS)}")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _apply_overrides(load_config(args.config), args)
        out = _output_dir(args, cfg)
    except (ConfigError, PropagationConfigError) as exc:
        return _error(EXIT_CONFIG, exc)
    try:
        result = COMMANDS[args.command](cfg, args, out)
        code = EXIT_OK
    except (ConfigError, PropagationConfigError, ValueError) as exc:
        return _error(EXIT_CONFIG, exc)
    except (NoConvergenceError, DivergenceError) as exc:
        return _error(EXIT_SOLVER, exc)
    except PropagationAbort as exc:
        code = _error(EXIT_ABORT, exc)
        result = {"aborted_at": exc.time}
    except PTFeederError as exc:
        return _error(EXIT_ERROR, exc)
    manifest = {"command": args.command, "argv": list(argv if argv is not None else sys.argv[1:]),
                "config": cfg.to_dict(), "config_sha256": cfg.digest(), "versions": _versions(),
                "wall_time_s": time.perf_counter() - t0, "exit_code": code}
    write_json(out / "manifest.json", manifest)
    if code == EXIT_OK:
        print(json.dumps(result, default=_jsonable, sort_keys=True))
    return code


def main():
    sys.exit(run_subcommand())


if __name__ == "__main__":
    main()
