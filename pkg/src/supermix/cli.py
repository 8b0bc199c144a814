"""Command-line driver: ``supermix <command> --config file.json``.

Exit codes: 0 success, 1 numerical non-convergence, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .errors import SupermixError
from .measures import Sample

log = logging.getLogger("supermix")

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_clean(v) for v in value]
    return value


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


class OutputDir:
    """Output folder guarded by a manifest carrying the config hash."""

    def __init__(self, root: Path, command: str, config: dict, force: bool):
        self.root = root
        self.command = command
        self.hash = ex.config_hash({"command": command, "config": config})
        self.files: list[str] = []
        manifest = root / f"manifest_{command}.json"
        if manifest.exists() and not force:
            old = json.loads(manifest.read_text())
            if old.get("config_hash") != self.hash:
                raise UsageError(
                    f"{root} holds results of a different {command} config; use --force to overwrite"
                )
        root.mkdir(parents=True, exist_ok=True)
        self.manifest = manifest

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.root / name

    def close(self, extra: dict | None = None) -> None:
        data = {
            "command": self.command,
            "config_hash": self.hash,
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "files": sorted(set(self.files)),
        }
        data.update(extra or {})
        _write_json(self.manifest, _clean(data))


def _load_config(args) -> dict:
    if args.config is None:
        raise UsageError("--config is required")
    try:
        data = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    if args.seed is not None:
        data["seeds"] = [args.seed]
    return data


def _parse(data: dict) -> ex.ExperimentConfig:
    try:
        return ex.ExperimentConfig.from_dict(data)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc


def _sample_for(cfg: ex.ExperimentConfig, out: Path, seed: int) -> Sample:
    existing = out / f"sample_seed{seed}.csv"
    if existing.exists():
        return Sample.from_csv(existing.read_text(), seed=seed)
    return ex.simulate(cfg, seed)


def cmd_simulate(args) -> int:
    raw = _load_config(args)
    cfg = _parse(raw)
    out = OutputDir(Path(args.out), "simulate", raw, args.force)
    for seed in cfg.seeds:
        sample = ex.simulate(cfg, seed)
        out.path(f"sample_seed{seed}.csv").write_text(sample.to_csv())
    out.close({"seeds": cfg.seeds, "n": cfg.n})
    return EXIT_OK


def cmd_sfw(args) -> int:
    raw = _load_config(args)
    cfg = _parse(raw)
    root = Path(args.out)
    out = OutputDir(root, "sfw", raw, args.force)
    status = EXIT_OK
    summary = {}
    for seed in cfg.seeds:
        sample = None if cfg.exact_moment else _sample_for(cfg, root, seed)
        result = ex.run_sfw(cfg, seed, sample)
        data = result.to_json_dict()
        err = ex.support_error(result.estimate, cfg.truth)
        data["support_error"] = err
        data["kappa"] = cfg.resolve_kappa(sample.n if sample is not None else cfg.n)
        data["config_hash"] = out.hash
        _write_json(out.path(f"sfw_seed{seed}.json"), _clean(data))
        _write_csv(
            out.path(f"sfw_objective_seed{seed}.csv"),
            ["iteration", "objective", "support_size"],
            [(i + 1, repr(v), s) for i, (v, s) in enumerate(zip(result.objective_trace, result.support_trace))],
        )
        summary[str(seed)] = {"converged": result.converged, "k_hat": err["k_hat"]}
        if not result.converged:
            log.warning("seed %d: SFW stopped without meeting the dual criterion", seed)
            status = EXIT_NUMERICAL
    out.close({"runs": summary})
    return status


def cmd_cpgd(args) -> int:
    raw = _load_config(args)
    cfg = _parse(raw)
    root = Path(args.out)
    out = OutputDir(root, "cpgd", raw, args.force)
    for seed in cfg.seeds:
        sample = None if cfg.exact_moment else _sample_for(cfg, root, seed)
        measure, traj = ex.run_cpgd(cfg, seed, sample)
        traj.to_csv(out.path(f"cpgd_trajectory_seed{seed}.csv"))
        data = {
            "estimate": measure.to_json_dict(),
            "support_error": ex.support_error(measure, cfg.truth),
            "config_hash": out.hash,
        }
        _write_json(out.path(f"cpgd_seed{seed}.json"), _clean(data))
    out.close({"seeds": cfg.seeds})
    return EXIT_OK


def cmd_certify(args) -> int:
    raw = _load_config(args)
    cfg = _parse(raw)
    out = OutputDir(Path(args.out), "certify", raw, args.force)
    try:
        cert, audit, flags = ex.run_certify(cfg)
    except ArithmeticError as exc:
        log.error("%s", exc)
        out.close({"error": str(exc)})
        return EXIT_NUMERICAL
    report = audit.to_json_dict()
    report.update(flags)
    report["certificate"] = cert.to_json_dict()
    report["config_hash"] = out.hash
    _write_json(out.path("certificate_audit.json"), _clean(report))
    if cert.dim == 1:
        lo, hi = cfg.certify.get("plot_range", [float(cert.support.min()) - 10, float(cert.support.max()) + 10])
        t = np.linspace(lo, hi, int(cfg.certify.get("plot_points", 2001)))
        _write_csv(out.path("certificate_grid.csv"), ["t", "P"], [(repr(a), repr(b)) for a, b in zip(t, cert.value(t))])
    out.close()
    return EXIT_OK


def cmd_rates(args) -> int:
    raw = _load_config(args)
    cfg = _parse(raw)
    out = OutputDir(Path(args.out), "rates", raw, args.force)
    rows, summary = ex.run_rates(cfg, workers=args.workers)
    keys = ["n", "seed", "kappa", "k_hat", "hausdorff", "matched_weight_l1", "converged", "dual_sup"]
    _write_csv(
        out.path("rates_ledger.csv"),
        ["config_hash"] + keys,
        [[out.hash] + [r[k] for k in keys] for r in rows],
    )
    _write_json(out.path("rates_summary.json"), _clean({**summary, "config_hash": out.hash}))
    out.close({"slope": summary["slope"]})
    return EXIT_OK


def cmd_figure1(args) -> int:
    raw = copy.deepcopy(ex.FIGURE1_CONFIG)
    if args.config is not None:
        raw.update(json.loads(Path(args.config).read_text()))
    if args.seed is not None:
        raw["seeds"] = [args.seed]
    if args.steps is not None:
        raw["cpgd"]["num_steps"] = args.steps
    if args.particles is not None:
        raw["cpgd"]["num_particles"] = args.particles
    cfg = _parse(raw)
    root = Path(args.out)
    out = OutputDir(root, "figure1", raw, args.force)
    seed = cfg.seeds[0]
    sample = ex.simulate(cfg, seed)
    out.path(f"sample_seed{seed}.csv").write_text(sample.to_csv())
    measure, traj = ex.run_cpgd(cfg, seed, sample)
    traj.to_csv(out.path("figure1_trajectory.csv"))
    data = {
        "estimate": measure.to_json_dict(),
        "support_error": ex.support_error(measure, cfg.truth),
        "seed": seed,
        "config_hash": out.hash,
    }
    _write_json(out.path("figure1_final.json"), _clean(data))
    out.close()
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "draw samples from the mixture"),
    "sfw": (cmd_sfw, "run sliding Frank-Wolfe"),
    "cpgd": (cmd_cpgd, "run conic particle gradient descent"),
    "certify": (cmd_certify, "build and audit a dual certificate"),
    "rates": (cmd_rates, "sweep sample sizes and fit the error slope"),
    "figure1": (cmd_figure1, "reference particle run on the three-spike mixture"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="supermix", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (func, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=name != "figure1", help="JSON experiment config")
        p.add_argument("--out", default=f"supermix_{name}", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seeds with one seed")
        p.add_argument("--force", action="store_true", help="overwrite results of a different config")
        if name == "rates":
            p.add_argument("--workers", type=int, default=1)
        if name == "figure1":
            p.add_argument("--steps", type=int, default=None)
            p.add_argument("--particles", type=int, default=None)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"supermix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SupermixError as exc:
        print(f"supermix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, ValueError) else EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
