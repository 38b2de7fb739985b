"""Command-line driver: bath -> plan -> run -> combine -> CHER, plus canned figure scenarios.

Exit codes: 0 success, 2 configuration error, 3 backend failure, 4 IO error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bathgen import BathConfiguration, CapacityError, LatticeSpec, assign_polarizations, default_bath, load_bath, save_bath
from .device import DeviceProfile, load_profile, shipped_profiles
from .physics import DephasingSeries, precession_arrays, read_series, write_series
from .planner import PartitionPlan, execute_plan, parse_backend, partition_bath, save_plan
from .qsim import FAMILIES, Polarization
from .spectral import cher, count_peaks, write_cher

EXIT_OK, EXIT_CONFIG, EXIT_BACKEND, EXIT_IO = 0, 2, 3, 4
FIGURES = ("fig5", "fig6", "fig7", "fig8")
FIGURE_FIELDS = (50.0, 100.0, 200.0)
FIG8_PLACEMENTS = ("left_right", "top_left", "top_right")


class ConfigError(ValueError):
    pass


class InputError(ValueError):
    """A data file exists but cannot be parsed."""


@dataclass
class RunConfig:
    seed: int = LatticeSpec().seed
    lattice: dict = field(default_factory=dict)
    bath_file: str | None = None
    bz: list = field(default_factory=lambda: [100.0])
    pol: str = "none"
    backend: dict = field(default_factory=lambda: {"*": "analytic"})
    profile: str = "heavy_hex_27"
    simulator_profile: str = "ideal_simulator"
    placement: str = "default"
    shots: int | None = None
    tmax: float = 20.0
    tsteps: int = 401
    window: str = "none"
    num_freqs: int = 2048
    out: str = "out"
    jobs: int = field(default_factory=lambda: os.cpu_count() or 1)

    def validate(self) -> None:
        if not self.bz:
            raise ConfigError("at least one Bz value is required")
        if any(b < 0 for b in self.bz):
            raise ConfigError("Bz values must be non-negative")
        if self.tmax <= 0 or self.tsteps < 2:
            raise ConfigError("need tmax > 0 and tsteps >= 2")
        if self.shots is not None and self.shots < 2:
            raise ConfigError("shots must be >= 2")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.bath_file is not None and not Path(self.bath_file).is_file():
            raise ConfigError(f"bath file {self.bath_file} does not exist")
        for name in (self.profile, self.simulator_profile):
            if name not in shipped_profiles() and not Path(name).is_file():
                raise ConfigError(f"profile {name!r} is neither a shipped profile nor a file")
        for value in self.backend.values():
            try:
                parse_backend(value, self.shots)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        polarization_vector(self.pol)
        parse_window(self.window)

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.tmax, self.tsteps)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def polarization_vector(text: str) -> np.ndarray:
    """``none``, ``z``, ``x``, ``ztheta:<t>`` or ``xz:<t1>,<t2>`` (angles in rad)."""
    family, _, rest = text.partition(":")
    if family not in FAMILIES:
        raise ConfigError(f"unknown polarization {text!r}; families are {', '.join(FAMILIES)}")
    try:
        angles = tuple(float(a) for a in rest.split(",")) if rest else ()
        return Polarization(family, angles).vector()
    except ValueError as exc:
        raise ConfigError(f"bad polarization {text!r}: {exc}") from exc


def parse_window(text: str):
    kind, _, sigma = text.partition(":")
    if kind == "none":
        return None
    if kind != "gaussian":
        raise ConfigError(f"unknown window {text!r}")
    if not sigma:
        return "gaussian"
    try:
        s = float(sigma)
    except ValueError as exc:
        raise ConfigError(f"bad window sigma {sigma!r}") from exc
    if s <= 0:
        raise ConfigError("window sigma must be positive")
    return ("gaussian", s)


def parse_backends(text: str) -> dict:
    """``analytic`` or ``heavy_hex_27=noisy,ideal_simulator=analytic``."""
    if "=" not in text:
        return {"*": text}
    out = {}
    for item in text.split(","):
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"bad backend mapping {item!r}")
        out[name.strip()] = value.strip()
    return out


def resolve_profile(name: str) -> DeviceProfile:
    shipped = shipped_profiles()
    if name in shipped:
        return shipped[name]
    try:
        return load_profile(name)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid profile file {name}: {exc}") from exc


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    doc = json.loads(Path(path).read_text())
    # a manifest embeds the config it ran with
    doc = doc.get("config", doc)
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return doc


def build_config(args) -> RunConfig:
    doc = load_config(getattr(args, "config", None))
    overrides = {
        "seed": args.seed,
        "bz": args.bz,
        "pol": args.pol,
        "profile": args.profile,
        "placement": args.placement,
        "shots": args.shots,
        "tmax": args.tmax,
        "tsteps": args.tsteps,
        "out": args.out,
        "jobs": args.jobs,
        "bath_file": getattr(args, "bath", None),
        "window": getattr(args, "window", None),
        "backend": None if args.backend is None else parse_backends(args.backend),
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.bz = [float(b) for b in cfg.bz]
    cfg.validate()
    return cfg


# -- shared steps ------------------------------------------------------------


def make_bath(cfg: RunConfig, pol=None) -> BathConfiguration:
    p = polarization_vector(cfg.pol) if pol is None else np.asarray(pol, dtype=float)
    if cfg.bath_file is not None:
        try:
            bath = load_bath(cfg.bath_file)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"cannot read bath file {cfg.bath_file}: {exc}") from exc
        return assign_polarizations(bath, p)
    try:
        spec = LatticeSpec(**{**cfg.lattice, "seed": cfg.seed})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad lattice parameters: {exc}") from exc
    return default_bath(spec, p)


def profiles_for(cfg: RunConfig) -> tuple[DeviceProfile, DeviceProfile, dict]:
    device = resolve_profile(cfg.profile)
    simulator = resolve_profile(cfg.simulator_profile)
    return device, simulator, {device.name: device, simulator.name: simulator}


def check_nyquist(bath: BathConfiguration, bz: float, times) -> None:
    """The frequency grid must resolve the fastest nuclear precession."""
    omega0, mag, _ = precession_arrays(bath, bz)
    fastest = max([omega0, *mag]) if len(mag) else omega0
    nyquist = np.pi / (times[1] - times[0])
    if fastest >= nyquist:
        raise ConfigError(f"precession {fastest:.4g} rad/us exceeds the grid's Nyquist limit {nyquist:.4g}; use more tsteps")


def run_field(cfg, bath, plan, profiles, bz, seed, placement=None):
    try:
        return execute_plan(
            bath, plan, bz, cfg.times(), profiles, cfg.backend, cfg.shots,
            placement or cfg.placement, seed, cfg.jobs,
        )
    except (ConfigError, InputError, OSError):
        raise
    except Exception as exc:
        raise BackendError(f"group run failed at Bz={bz} G: {exc}") from exc


class BackendError(RuntimeError):
    pass


def field_tag(bz: float) -> str:
    return f"bz{bz:g}"


def write_manifest(out: Path, command: str, cfg: RunConfig, profiles: dict, outputs: list, extra=None) -> Path:
    doc = {
        "command": command,
        "config": cfg.to_json(),
        "seeds": {"lattice": cfg.seed, "run": cfg.seed},
        "profiles": {name: p.to_json() for name, p in profiles.items()},
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "outputs": sorted(str(Path(o).relative_to(out)) for o in outputs),
    }
    if extra:
        doc.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=1, default=float))
    return path


def gnuplot_script(path: Path, series: list[Path], chers: list[Path]) -> Path:
    lines = ["set datafile separator ','", "set key autotitle columnhead", "set multiplot layout 2,1"]
    if series:
        plots = ", ".join(f"'{p.name}' using 1:2 with lines title '{p.stem}'" for p in series)
        lines += ["set xlabel 't (us)'", "set ylabel 'Re phi'", f"plot {plots}"]
    if chers:
        plots = ", ".join(f"'{p.name}' using 1:2 with lines title '{p.stem}'" for p in chers)
        lines += ["set xlabel 'omega (rad/us)'", "set ylabel 'w'", "set xrange [-3:3]", f"plot {plots}"]
    lines.append("unset multiplot")
    path.write_text("\n".join(lines) + "\n")
    return path


# -- subcommands -------------------------------------------------------------


def cmd_bath(cfg: RunConfig, args) -> int:
    bath = make_bath(cfg)
    out = Path(cfg.out)
    path = save_bath(bath, out / "bath.json")
    inner = len(bath.inner_indices())
    print(f"{path}: {len(bath)} sites, {inner} inner (|r| < {bath.spec.polarization_radius} nm)")
    return EXIT_OK


def cmd_plan(cfg: RunConfig, args) -> int:
    bath = make_bath(cfg)
    device, simulator, _ = profiles_for(cfg)
    plan = partition_bath(bath, device, simulator)
    path = save_plan(plan, Path(cfg.out) / "plan.json")
    for name in dict.fromkeys(g.profile for g in plan.groups):
        print(f"{name}: group sizes {plan.sizes(name)}")
    print(path)
    return EXIT_OK


def cmd_run(cfg: RunConfig, args) -> int:
    out = Path(cfg.out)
    bath = make_bath(cfg)
    device, simulator, profiles = profiles_for(cfg)
    plan = partition_bath(bath, device, simulator)
    outputs = [save_plan(plan, out / "plan.json")]
    for bz in cfg.bz:
        check_nyquist(bath, bz, cfg.times())
        groups, combined = run_field(cfg, bath, plan, profiles, bz, cfg.seed)
        tag = field_tag(bz)
        for i, s in enumerate(groups):
            outputs.append(write_series(s, out / tag / "groups" / f"group{i:03d}.csv"))
        outputs.append(write_series(combined, out / tag / "combined.csv"))
        print(f"Bz={bz:g} G: {len(groups)} groups -> {out / tag / 'combined.csv'}")
    write_manifest(out, "run", cfg, profiles, outputs)
    return EXIT_OK


def cmd_cher(cfg: RunConfig, args) -> int:
    try:
        series = read_series(args.series)
    except ValueError as exc:
        raise InputError(f"malformed series CSV {args.series}: {exc}") from exc
    try:
        result = cher(series, num_freqs=args.num_freqs or cfg.num_freqs, window=parse_window(cfg.window))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    target = Path(args.out_file) if args.out_file else Path(cfg.out) / (Path(args.series).stem + "_cher.csv")
    write_cher(result, target)
    print(f"{target}: negativity={result.negativity:.6g} normalization={result.normalization:.6f}")
    return EXIT_OK


def _analyse(series: DephasingSeries, cfg: RunConfig, path: Path, window=None) -> dict:
    window = parse_window(cfg.window) if window is None else window
    result = cher(series, num_freqs=cfg.num_freqs, window=window)
    write_cher(result, path)
    return {
        "negativity": result.negativity,
        "min_weight": float(result.weights.min()),
        "normalization": result.normalization,
        "peaks": count_peaks(result),
        "max_abs_im_phi": float(np.abs(series.values.imag).max()),
        "window": result.window,
    }


def _figure_pol(name: str) -> tuple:
    return {"fig5": (0.0, 0.0, 0.0), "fig6": (0.0, 0.0, 1.0), "fig7": (1.0, 0.0, 0.0), "fig8": (0.0, 0.0, 0.0)}[name]


def cmd_figure(cfg: RunConfig, args) -> int:
    name = args.name
    if name not in FIGURES:
        raise ConfigError(f"unknown figure {name!r}; choose from {', '.join(FIGURES)}")
    if args.bz is None:
        cfg.bz = list(FIGURE_FIELDS)
    out = Path(cfg.out) / name
    bath = make_bath(cfg, _figure_pol(name))
    device, simulator, profiles = profiles_for(cfg)
    summary, outputs, series_paths, cher_paths = {}, [], [], []
    if name != "fig8":
        plan = partition_bath(bath, device, simulator)
        for bz in cfg.bz:
            check_nyquist(bath, bz, cfg.times())
            _, combined = run_field(cfg, bath, plan, profiles, bz, cfg.seed)
            tag = field_tag(bz)
            sp = write_series(combined, out / f"{tag}_phi.csv")
            cp = out / f"{tag}_cher.csv"
            summary[tag] = _analyse(combined, cfg, cp)
            series_paths.append(sp)
            cher_paths.append(cp)
    else:
        if device.coupling_map is None:
            raise ConfigError("fig8 needs a device profile with a coupling map")
        cfg.backend = {device.name: "noisy", "*": cfg.backend.get("*", "analytic")}
        for placement in FIG8_PLACEMENTS:
            if placement not in device.placements:
                raise ConfigError(f"profile {device.name} has no placement {placement!r}")
            n_pairs = len(device.placements[placement].pairs)
            paired = dataclasses.replace(device, max_pairs=n_pairs)
            prof = {paired.name: paired, simulator.name: simulator}
            proto = PartitionPlan.from_json({"groups": [{"nuclei": list(range(n_pairs)), "profile": paired.name}]})
            full = partition_bath(bath, paired, simulator)
            proto_bath = bath.subset(range(n_pairs))
            for bz in cfg.bz:
                check_nyquist(bath, bz, cfg.times())
                tag = f"{placement}_{field_tag(bz)}"
                _, p_series = run_field(cfg, proto_bath, proto, prof, bz, cfg.seed, placement)
                _, combined = run_field(cfg, bath, full, prof, bz, cfg.seed, placement)
                # two nuclei do not decay within the grid; taper them unless a window was chosen
                proto_window = ("gaussian", cfg.tmax / 5) if cfg.window == "none" else None
                for label, s, window in (("proto", p_series, proto_window), ("full", combined, None)):
                    sp = write_series(s, out / f"{tag}_{label}_phi.csv")
                    cp = out / f"{tag}_{label}_cher.csv"
                    summary[f"{tag}_{label}"] = _analyse(s, cfg, cp, window)
                    series_paths.append(sp)
                    cher_paths.append(cp)
    outputs += series_paths + cher_paths
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    outputs.append(out / "summary.json")
    if args.gnuplot:
        outputs.append(gnuplot_script(out / "plot.gp", series_paths, cher_paths))
    write_manifest(out, f"figure {name}", cfg, profiles, outputs, {"summary": summary})
    for key, row in summary.items():
        print(f"{key}: negativity={row['negativity']:.4g} peaks={row['peaks']} max|Im phi|={row['max_abs_im_phi']:.3g}")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------


def _bz_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad Bz list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (or a manifest from an earlier run)")
    common.add_argument("--seed", type=int, help="lattice sampling and shot seed")
    common.add_argument("--bz", type=_bz_list, help="comma-separated fields in G, e.g. 50,100,200")
    common.add_argument("--pol", help="inner-nucleus polarization: none|z|x|ztheta:T|xz:T1,T2")
    common.add_argument("--backend", help="analytic|exact-circuit|shots(n)|noisy, or profile=backend,...")
    common.add_argument("--profile", help="device profile name or JSON file")
    common.add_argument("--placement", help="named placement on the device profile")
    common.add_argument("--shots", type=int)
    common.add_argument("--tmax", type=float, help="last time point in us (default 20)")
    common.add_argument("--tsteps", type=int, help="number of time points (default 401)")
    common.add_argument("--window", help="none|gaussian|gaussian:SIGMA")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, help="parallel group workers (default: all cores)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="nvaqs", description="Partitioned simulation of NV-centre free-induction decay.")
    parser.add_argument("--version", action="version", version=f"nvaqs {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("bath", parents=[common], help="generate the 13C bath")
    p.set_defaults(func=cmd_bath)
    p = sub.add_parser("plan", parents=[common], help="partition the bath into groups")
    p.add_argument("--bath", help="existing bath JSON")
    p.set_defaults(func=cmd_plan)
    p = sub.add_parser("run", parents=[common], help="run all groups and combine")
    p.add_argument("--bath", help="existing bath JSON")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("cher", parents=[common], help="CHER of a series CSV")
    p.add_argument("series", help="series CSV")
    p.add_argument("-o", "--out-file", help="CHER CSV path")
    p.add_argument("--num-freqs", type=int)
    p.set_defaults(func=cmd_cher)
    p = sub.add_parser("figure", parents=[common], help="canned figure scenarios")
    p.add_argument("name", help="fig5|fig6|fig7|fig8")
    p.add_argument("--bath", help="existing bath JSON")
    p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")
    p.set_defaults(func=cmd_figure)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        return args.func(cfg, args)
    except (ConfigError, CapacityError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (OSError, InputError) as exc:
        print(f"IO error: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
