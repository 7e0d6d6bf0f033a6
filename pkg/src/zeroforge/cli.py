"""Command-line interface: training, simulation, and result emission.

Each subcommand reads one TOML or JSON config file whose keys default to
the reference experiment settings, runs the job, and writes its
artifacts plus a JSON run manifest into the output directory.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime
failure.  The ``ZEROFORGE_LOG`` environment variable sets the log level
(DEBUG, INFO, WARNING, ...; default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import __version__
from .constellation import (
    canonical_constellation,
    load_constellation,
    save_constellation,
)
from .decoders import load_mlp, save_mlp
from .errors import NotBracketedError, ValidationError, ZeroforgeError
from .montecarlo import (
    Scheme,
    class_histogram,
    gain_report_to_dict,
    measure_gain,
    run_sweep,
    write_sweep_csv,
)
from .training import config_from_dict, run_gradient_checks, train_dizet, train_nn

logger = logging.getLogger("zeroforge.cli")

_GRAD_TOL = 1e-3


# ---------------------------------------------------------------------------
# Config and manifest plumbing
# ---------------------------------------------------------------------------


def load_config(path: str | Path | None) -> dict:
    """Parse a TOML (.toml) or JSON (.json) config file into a dict."""
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file '{p}' does not exist")
    if p.suffix == ".toml":
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    if p.suffix == ".json":
        return json.loads(p.read_text())
    raise ValidationError(f"config file '{p}' must end in .toml or .json")


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


class _ManifestWriter:
    """Collects output paths and writes the run manifest at the end."""

    def __init__(self, command: str, config: dict, seed: int, out_dir: Path):
        self.command = command
        self.config = config
        self.seed = seed
        self.out_dir = out_dir
        self.outputs: list[Path] = []
        self.started = _utcnow()

    def add(self, path: Path) -> Path:
        self.outputs.append(path)
        return path

    def write(self) -> Path:
        missing = [str(p) for p in self.outputs if not p.exists()]
        if missing:
            raise ZeroforgeError(f"output file(s) missing at run end: {', '.join(missing)}")
        manifest = {
            "format_version": 1,
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "version": __version__,
            "started_utc": self.started,
            "finished_utc": _utcnow(),
            "outputs": [
                str(p.relative_to(self.out_dir)) if p.is_relative_to(self.out_dir) else str(p)
                for p in self.outputs
            ],
        }
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2) + "\n")
        return path


def _write_loss_csv(path: Path, losses: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "lr", "mean_loss"])
        for epoch, lr, loss in losses:
            w.writerow([int(epoch), f"{lr:.10g}", f"{loss:.10g}"])


def _resolve_train_config(raw: dict, command: str, seed_flag: int | None):
    defaults = {"n_epoch": 30000 if command == "train-dizet" else 15000}
    merged = {**defaults, **raw}
    if seed_flag is not None:
        merged["seed"] = seed_flag
    if "K" not in merged:
        raise ValidationError("field 'K' is required")
    return config_from_dict(merged), merged


# ---------------------------------------------------------------------------
# Scheme resolution shared by simulate and histogram
# ---------------------------------------------------------------------------


def _resolve_scheme(entry: dict, K: int) -> Scheme:
    if not isinstance(entry, dict):
        raise ValidationError("each scheme entry must be a table/object")
    label = entry.get("label")
    if not label:
        raise ValidationError("field 'label' is required for every scheme")
    decoder = entry.get("decoder", "dizet")
    if "constellation" in entry:
        c = load_constellation(entry["constellation"])
        if c.K != K:
            raise ValidationError(
                f"scheme '{label}': checkpoint K={c.K} does not match configured K={K}"
            )
    else:
        c = canonical_constellation(K, float(entry.get("lam", 0.5)))
    mlp = None
    if decoder == "nn":
        if "mlp" not in entry:
            raise ValidationError(f"scheme '{label}': decoder 'nn' needs field 'mlp'")
        mlp = load_mlp(entry["mlp"])
        if mlp.K != K:
            raise ValidationError(
                f"scheme '{label}': network K={mlp.K} does not match configured K={K}"
            )
    extra = set(entry) - {"label", "decoder", "constellation", "mlp", "lam"}
    if extra:
        raise ValidationError(f"scheme '{label}': unknown field(s) {', '.join(sorted(extra))}")
    return Scheme(label=label, constellation=c, decoder=decoder, mlp=mlp)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_train_dizet(args) -> int:
    raw = load_config(args.config)
    cfg, resolved = _resolve_train_config(raw, "train-dizet", args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = _ManifestWriter("train-dizet", resolved, cfg.seed, out)
    logger.info("training zero-test constellation: K=%d, %d epochs", cfg.K, cfg.n_epoch)
    res = train_dizet(cfg)
    save_constellation(res.constellation, man.add(out / "constellation.json"))
    _write_loss_csv(man.add(out / "loss.csv"), res.losses)
    man.write()
    print(f"constellation: R={res.constellation.radius:.4f} K={cfg.K} -> {out}")
    return 0


def cmd_train_nn(args) -> int:
    raw = load_config(args.config)
    cfg, resolved = _resolve_train_config(raw, "train-nn", args.seed)
    cfg.resolve_l_hidden()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = _ManifestWriter("train-nn", resolved, cfg.seed, out)
    logger.info("training joint constellation + network: K=%d, 2x%d epochs", cfg.K, cfg.n_epoch)
    res = train_nn(cfg)
    save_constellation(res.constellation, man.add(out / "constellation.json"))
    save_mlp(res.mlp, man.add(out / "mlp.json"))
    _write_loss_csv(man.add(out / "loss_stage1.csv"), res.losses_stage1)
    _write_loss_csv(man.add(out / "loss_stage2.csv"), res.losses_stage2)
    man.write()
    print(
        f"constellation: R={res.constellation.radius:.4f} K={cfg.K} "
        f"(skipped batches: {res.skipped_stage1}+{res.skipped_stage2}) -> {out}"
    )
    return 0


def cmd_simulate(args) -> int:
    raw = load_config(args.config)
    if "K" not in raw:
        raise ValidationError("field 'K' is required")
    K = int(raw["K"])
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    schemes_cfg = raw.get("schemes", [])
    if not schemes_cfg:
        raise ValidationError("field 'schemes' must list at least one scheme")
    channels = raw.get("channels", ["awgn"])
    if isinstance(channels, str):
        channels = [channels]
    grid = raw.get("ebn0_grid")
    if not grid:
        raise ValidationError("field 'ebn0_grid' must be a nonempty list of dB values")
    target_bler = float(raw.get("target_bler", 1e-3))
    baseline = raw.get("baseline", "dizet-half")
    max_trials = int(raw.get("max_trials", 2_000_000))
    target_block_errors = int(raw.get("target_block_errors", 200))
    idft_size = int(raw.get("idft_size", 32))
    threads = 1 if args.deterministic else max(1, args.threads)

    schemes = [_resolve_scheme(e, K) for e in schemes_cfg]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = _ManifestWriter("simulate", {**raw, "seed": seed}, seed, out)

    all_results = []
    gains = {}
    for channel in channels:
        per_channel = []
        for scheme in schemes:
            logger.info("sweep: %s over %s, %d points", scheme.label, channel, len(grid))
            r = run_sweep(
                scheme, channel, grid, seed=seed, max_trials=max_trials,
                target_block_errors=target_block_errors, threads=threads,
                idft_size=idft_size,
            )
            per_channel.append(r)
        all_results.extend(per_channel)
        if baseline in [r.scheme for r in per_channel]:
            # a grid that never crosses the target still yields valid sweeps,
            # so record the reason instead of abandoning the run
            try:
                report = measure_gain(per_channel, target_bler=target_bler, baseline=baseline)
            except NotBracketedError as exc:
                logger.warning("gain report skipped for %s: %s", channel, exc)
                gains[channel] = {"error": str(exc)}
                print(f"{channel}: gain report skipped ({exc})")
            else:
                gains[channel] = gain_report_to_dict(report)
                for e in report.entries:
                    print(f"{channel} {e.scheme}: {e.ebn0_db_at_target:.2f} dB at "
                          f"BLER {target_bler:g}, gain {e.gain_db:+.2f} dB")
    write_sweep_csv(all_results, man.add(out / "sweeps.csv"))
    (man.add(out / "gains.json")).write_text(
        json.dumps({"format_version": 1, "channels": gains}, indent=2) + "\n"
    )
    man.write()
    return 0


def cmd_histogram(args) -> int:
    raw = load_config(args.config)
    if "K" not in raw:
        raise ValidationError("field 'K' is required")
    K = int(raw["K"])
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    schemes_cfg = raw.get("schemes", [])
    if not schemes_cfg:
        raise ValidationError("field 'schemes' must list at least one scheme")
    ebn0_db = None if raw.get("noiseless", False) else float(raw.get("ebn0_db", -5.0))
    n_decodes = int(raw.get("n_decodes", 50000))
    channel = raw.get("channel", "awgn")

    schemes = [_resolve_scheme(e, K) for e in schemes_cfg]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = _ManifestWriter("histogram", {**raw, "seed": seed}, seed, out)

    path = man.add(out / "histogram.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scheme", "K", "ebn0_db", "class", "count"])
        for scheme in schemes:
            h = class_histogram(scheme, ebn0_db, n_decodes, seed=seed, channel=channel)
            for cls, count in enumerate(h.decoded_counts, start=1):
                w.writerow([scheme.label, K, "" if ebn0_db is None else ebn0_db,
                            cls, int(count)])
            share = (h.decoded_counts[0] + h.decoded_counts[-1]) / h.n_decodes
            print(f"{scheme.label}: classes 1+{1 << K} hold {share:.4f} of decodes")
    man.write()
    return 0


def cmd_grad_check(args) -> int:
    raw = load_config(args.config)
    n_instances = int(raw.get("n_instances", 100))
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = _ManifestWriter("grad-check", {**raw, "seed": seed, "n_instances": n_instances},
                          seed, out)
    report = run_gradient_checks(seed=seed, n_instances=n_instances)
    ok = all(v < _GRAD_TOL for v in report.values())
    for name, err in report.items():
        print(f"{name}: max relative error {err:.3e} "
              f"({'ok' if err < _GRAD_TOL else 'FAIL'})")
    (man.add(out / "gradcheck.json")).write_text(
        json.dumps({"format_version": 1, "tolerance": _GRAD_TOL,
                    "max_relative_errors": report, "passed": ok}, indent=2) + "\n"
    )
    man.write()
    return 0 if ok else 2


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zeroforge",
        description="Train, simulate, and inspect zero-constellation modulation schemes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "train-dizet": (cmd_train_dizet, "learn a constellation for the zero-test decoder"),
        "train-nn": (cmd_train_nn, "jointly learn a constellation and neural decoder"),
        "simulate": (cmd_simulate, "run BER/BLER sweeps and measure gains"),
        "histogram": (cmd_histogram, "count decoded-message classes"),
        "grad-check": (cmd_grad_check, "verify analytic gradients against finite differences"),
    }
    for name, (fn, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="TOML or JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for simulation chunks")
        p.add_argument("--deterministic", action="store_true",
                       help="force single-threaded reductions")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("ZEROFORGE_LOG", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ZeroforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, RuntimeError) else 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
