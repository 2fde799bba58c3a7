"""
Command-line entry point::

    gclm simulate|couple|uniqueness|sweep|selftest --config PATH [--seed S] [--threads T] [--force]

Results go to ``<output.directory>/<config-hash>/`` with a ``manifest.json``
listing every file and its sha256. Exit codes: 0 success, 2 configuration
error, 3 blow-up, 4 statistical failure (selftest).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, parse_config, sweep_points
from .diagnostics import (
    AttractorObserver,
    FluxObserver,
    KBAverager,
    MomentTracker,
    SpectrumObserver,
    write_attractor_csv,
    write_flux_csv,
    write_kb_csv,
    write_moments_csv,
    write_spectrum_csv,
    write_csv,
)
from .errors import BlowUpError, ConfigurationError, GCLMError
from .ergodicity import CSTAR_PROXY, coupled_pair, estimate_cstar, uniqueness_probe
from .integrator import load_checkpoint, run, save_checkpoint
from .selftest import run_selftest
from .spectral import set_fft_workers

log = logging.getLogger("gclm")

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_STATISTICAL = 0, 2, 3, 4
THREADS_ENV = "GCLM_THREADS"
HASH_CHARS = 16


def physical_cores() -> int:
    try:
        import psutil
        n = psutil.cpu_count(logical=False)
    except ImportError:
        n = None
    return n or os.cpu_count() or 1


def resolve_threads(flag: int | None) -> int:
    """Flag beats environment beats the physical core count."""
    if flag is not None:
        return max(1, flag)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV}={env!r} is not an integer") from None
    return physical_cores()


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Bundle:
    """An output directory whose files all end up in the manifest."""

    def __init__(self, cfg: RunConfig, force: bool = False, suffix: str = ""):
        self.cfg = cfg
        self.hash = cfg.hash
        self.dir = Path(cfg.output["directory"]) / (self.hash[:HASH_CHARS] + suffix)
        manifest = self.dir / "manifest.json"
        if manifest.exists() and not force:
            raise ConfigurationError(f"{self.dir} already holds results for this config (use --force)")
        (self.dir / "checkpoints").mkdir(parents=True, exist_ok=True)
        self.t0 = time.perf_counter()
        self.extra: dict = {}
        (self.dir / "config.json").write_text(cfg.to_json() + "\n")

    def path(self, name: str) -> Path:
        return self.dir / name

    def write_json(self, name: str, obj) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
        return p

    def finalize(self, streams: list, status: str = "ok") -> Path:
        files = sorted(p for p in self.dir.rglob("*") if p.is_file() and p.name != "manifest.json")
        manifest = {
            "config_hash": self.hash,
            "code_version": __version__,
            "mode": self.cfg.mode,
            "seeds": {"master": self.cfg.seed, "streams": streams,
                      "initial": [ini.seed for ini in self.cfg.initial]},
            "wall_time_s": time.perf_counter() - self.t0,
            "status": status,
            "files": {str(p.relative_to(self.dir)): sha256_file(p) for p in files},
            **self.extra,
        }
        return self.write_json("manifest.json", manifest)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, force: bool = False, resume: str | None = None) -> Path:
    solver, spec = cfg.solver, cfg.forcing
    every = int(cfg.output["cadence"])
    T = float(cfg.experiment["T"])
    if resume:
        start = load_checkpoint(resume, solver, spec, force=force)
        t_start = start.t
        bundle = Bundle(cfg, force=force, suffix=f"-from-t{t_start:g}")
    else:
        start = cfg.initial[0].build(solver.N)
        t_start = 0.0
        bundle = Bundle(cfg, force=force)
    burn_in = t_start + cfg.experiment["burn_in_fraction"] * T
    moments = [MomentTracker(0, every), MomentTracker(1, every)]
    moments[1].name = "moments1"
    kb = KBAverager(cfg.observables, t_start + T, burn_in, every=every)
    observers = [*moments, kb, AttractorObserver(every=every)]
    if cfg.output["spectra"]:
        observers += [SpectrumObserver(every), FluxObserver(solver.a, solver.grid, every)]
    try:
        res = run(solver, spec, start, T, observers, seed=cfg.seed, index=0)
    except BlowUpError as exc:
        bundle.write_json("blowup.json", {"config_hash": bundle.hash, **exc.report()})
        bundle.finalize([[cfg.seed, 0]], status="blow-up")
        raise
    write_moments_csv(bundle.path("moments.csv"), [m.result() for m in moments])
    write_kb_csv(bundle.path("kb.csv"), kb.result())
    write_attractor_csv(bundle.path("attractor.csv"), observers[3].result())
    if cfg.output["spectra"]:
        write_spectrum_csv(bundle.path("spectrum.csv"), observers[4].result())
        write_flux_csv(bundle.path("flux.csv"), observers[5].result())
    if cfg.output["checkpoint"]:
        save_checkpoint(bundle.path("checkpoints/final.ckpt"), res.state, solver, spec)
    bundle.extra["final_time"] = res.state.t
    return bundle.finalize([[cfg.seed, 0]])


def cmd_couple(cfg: RunConfig, force: bool = False) -> Path:
    bundle = Bundle(cfg, force=force)
    e = cfg.experiment
    T = float(e["T"])
    window = tuple(e["fit_window"]) if e["fit_window"] else (e["burn_in_fraction"] * T, T)
    w1, w2 = cfg.initial[0].build(cfg.solver.N), cfg.initial[1].build(cfg.solver.N)
    n = int(e["n_samples"])
    run_, fit = coupled_pair(cfg.solver, cfg.forcing, w1, w2, T, n, window=window, seed=cfg.seed,
                             m=int(e["m"]), cstar=float(e["cstar"]))
    write_csv(bundle.path("mixing.csv"), ["t", "mean_sq_diff", "stderr", "n_alive"], run_.mixing_rows())
    fit_json = fit.to_json() if fit else {"rate": None, "window": list(window),
                                          "reason": f"fit needs >= 10 surviving realizations, have {run_.n_alive}"}
    fit_json["config_hash"] = bundle.hash
    bundle.write_json("fit.json", fit_json)
    if run_.reports:
        bundle.write_json("blowup.json", {"config_hash": bundle.hash,
                                          "realizations": {str(k): v for k, v in run_.reports.items()}})
    blown = fit is None and bool(run_.reports)
    manifest = bundle.finalize([[cfg.seed, r] for r in range(n)], status="blow-up" if blown else "ok")
    if blown:
        raise BlowUpError(T, [], f"{len(run_.reports)} realizations blew up; too few left for the fit")
    return manifest


def cmd_uniqueness(cfg: RunConfig, force: bool = False) -> Path:
    bundle = Bundle(cfg, force=force)
    e = cfg.experiment
    T = float(e["T"])
    fields = [ini.build(cfg.solver.N) for ini in cfg.initial]
    report = uniqueness_probe(cfg.solver, cfg.forcing, fields, T, cfg.observables, seed=cfg.seed,
                              burn_in=e["burn_in_fraction"] * T, every=int(cfg.output["cadence"]),
                              independent_noise=bool(e["independent_noise"]))
    out = report.to_json()
    out["config_hash"] = bundle.hash
    out["all_overlap"] = report.all_overlap
    cstar = estimate_cstar(cfg.solver, cfg.forcing, T, fields[0], cfg.seed, float(e["cstar"] or CSTAR_PROXY),
                           every=int(cfg.output["cadence"]))
    out["cstar"] = cstar.__dict__
    bundle.write_json("uniqueness.json", out)
    indices = list(range(len(fields))) if e["independent_noise"] else [0]
    return bundle.finalize([[cfg.seed, i] for i in indices])


COMMANDS = {"simulate": cmd_simulate, "couple": cmd_couple, "uniqueness": cmd_uniqueness}


def cmd_sweep(cfg: RunConfig, force: bool = False, threads: int = 1) -> Path:
    """One bundle per sweep value plus an aggregate index sorted by value."""
    points = sweep_points(cfg)
    cmd = COMMANDS[cfg.sweep["mode"]]

    def one(item):
        value, sub = item
        manifest = cmd(sub, force=force)
        return value, sub.hash, Path(manifest)

    with ThreadPoolExecutor(max_workers=max(1, min(threads, len(points)))) as pool:
        results = list(pool.map(one, points))
    root = Path(cfg.output["directory"]) / f"sweep-{cfg.hash[:HASH_CHARS]}"
    root.mkdir(parents=True, exist_ok=True)
    entries = sorted(
        ({"value": v, "config_hash": h, "manifest": str(m), "manifest_sha256": sha256_file(m)} for v, h, m in results),
        key=lambda d: (json.dumps(d["value"], sort_keys=True), d["config_hash"]),
    )
    index = {"config_hash": cfg.hash, "parameter": cfg.sweep["parameter"], "mode": cfg.sweep["mode"],
             "points": entries}
    path = root / "index.json"
    path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return path


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gclm", description="Stochastic gCLMG Galerkin solver and experiments")
    parser.add_argument("--version", action="version", version=f"gclm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "couple", "uniqueness", "sweep", "selftest"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "selftest", help="TOML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override experiment.seed")
        p.add_argument("--threads", type=int, default=None, help=f"worker threads (default: ${THREADS_ENV} or cores)")
        p.add_argument("--force", action="store_true", help="overwrite existing results / ignore checkpoint hash")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "simulate":
            p.add_argument("--resume", metavar="CHECKPOINT", help="continue from a checkpoint for another T")
        if name == "selftest":
            p.add_argument("--slow", action="store_true", help="include the inertial-range spectrum check (N=1024, T=200)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    config_hash = "-"
    try:
        threads = resolve_threads(args.threads)
        set_fft_workers(threads)
        if args.command == "selftest":
            results = run_selftest(slow=args.slow)
            failed = [r for r in results if not r.passed]
            print(f"{len(results) - len(failed)}/{len(results)} checks passed")
            if not failed:
                return EXIT_OK
            return EXIT_STATISTICAL if all(r.statistical for r in failed) else 1
        overrides = {("experiment", "mode"): args.command}
        if args.seed is not None:
            overrides[("experiment", "seed")] = args.seed
        cfg = parse_config(args.config, overrides)
        config_hash = cfg.hash[:HASH_CHARS]
        for note in cfg.notes:
            print(f"note: {note}", file=sys.stderr)
        if args.command == "sweep":
            out = cmd_sweep(cfg, args.force, threads)
        elif args.command == "simulate":
            out = cmd_simulate(cfg, args.force, args.resume)
        else:
            out = COMMANDS[args.command](cfg, args.force)
        print(out)
        return EXIT_OK
    except ConfigurationError as exc:
        print(f"config {config_hash}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"config {config_hash}: blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except GCLMError as exc:
        print(f"config {config_hash}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STATISTICAL


if __name__ == "__main__":
    sys.exit(main())
