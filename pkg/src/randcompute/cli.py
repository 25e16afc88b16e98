"""Command-line entry point: ``randcompute {analyze,simulate,sweep,verify}``.

Exit status: 0 success, 1 invalid configuration or arguments, 2 runtime
failure, 3 a verification criterion failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .analytics import bound_report
from .config import RunConfig, parse_config
from .engine import SlotCapExceeded, run
from .experiments import estimate_beta_star, stability_probe

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3
log = logging.getLogger("randcompute")


def _clean(x: Any) -> Any:
    """Make a value JSON-safe with 12 significant digits for floats."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x) or math.isnan(x):
            return str(x)
        return float(f"{x:.12g}")
    return x


def _dump(obj: Any) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _header(cfg: RunConfig, seed: int, **extra: Any) -> list[str]:
    lines = [f"config_hash={cfg.config_hash()} seed={seed}"]
    lines += [f"{k}={v}" for k, v in extra.items()]
    return lines


def _write(out: Path | None, name: str, text: str) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _load(args) -> RunConfig:
    cfg = parse_config(args.config)
    run_over: dict[str, Any] = {}
    if args.seed is not None:
        run_over["seed"] = args.seed
    if getattr(args, "rounds", None) is not None:
        run_over["rounds"] = args.rounds
        run_over["slots"] = None
    if getattr(args, "slots", None) is not None:
        run_over["slots"] = args.slots
    over: dict[str, dict] = {}
    if run_over:
        over["run"] = run_over
    if getattr(args, "replicas", None) is not None:
        over["experiment"] = {"replicas": args.replicas}
    beta = getattr(args, "beta", None)
    if isinstance(beta, float):
        over["arrival"] = {"beta": beta}
    return cfg.with_overrides(**over) if over else cfg


# -- subcommands -----------------------------------------------------------------


def cmd_analyze(args, out: Path | None) -> int:
    cfg = _load(args)
    rep = bound_report(
        cfg.graph,
        cfg.schema.K,
        cfg.schema.h,
        cfg.sink,
        beta=cfg.beta,
        eps_mix=float(cfg.analytics["mix_eps"]),
        laziness=float(cfg.analytics["laziness"]),
        log_base=float(cfg.analytics["log_base"]),
        constants=cfg.bounds,
    )
    doc = {"config_hash": cfg.config_hash(), "report": rep.to_dict()}
    text = _dump(doc)
    _write(out, "analyze.json", text)
    if not args.quiet:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args, out: Path | None) -> int:
    cfg = _load(args)
    s = cfg.build_state(cfg.seed)
    slots, rounds = cfg.run["slots"], cfg.run["rounds"]
    cap = int(cfg.run["slot_cap"])
    m = run(s, slots=int(slots), slot_cap=cap) if slots is not None else run(s, rounds=int(rounds), slot_cap=cap)
    head = _header(cfg, cfg.seed, mode=cfg.mode, beta=f"{cfg.beta:.12g}")
    _write(out, "events.csv", m.events_csv(head))
    series = ["slot,q_total,total_with_buffers,busy"]
    series += [f"{t},{q},{tot},{b}" for t, (q, tot, b) in
               enumerate(zip(m.q_series, m.total_series, m.busy), 1)]
    _write(out, "series.csv", "\n".join([f"# {h}" for h in head] + series) + "\n")
    ell = 0
    while ell + 1 in m.completion:
        ell += 1
    summary = {
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "slots": m.slots,
        "rounds_completed": len(m.completion),
        "ell": ell,
        "tau_app": m.tau_app(ell) if ell else None,
        "tau_f": m.tau_f(ell) if ell else None,
        "tau_bar": m.tau_bar(ell) if ell else None,
        "c_hat": m.c_hat(float(cfg.run["burn_in"])),
        "max_queue": max(m.max_queue),
        "max_buffer": max(m.max_c),
        "mismatches": m.mismatches,
    }
    _write(out, "metrics.json", _dump(summary))
    if args.audit:
        _write(out, "audit.tsv", "".join(f"# {h}\n" for h in head) + m.audit_text())
    if not args.quiet:
        sys.stdout.write(_dump(summary))
    if m.mismatches:
        log.error("%d consumed payloads disagree with the reference evaluation", m.mismatches)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_sweep(args, out: Path | None) -> int:
    cfg = _load(args)
    ex = cfg.experiment
    horizon = args.horizon or int(ex["horizon"])
    betas = args.beta or [float(b) for b in ex["betas"]]
    head = _header(cfg, cfg.seed, horizon=horizon,
                   proxy=f"slope>{float(ex['slope_threshold']):.12g} or max_queue>{cfg.queue_cap}")
    rows = ["beta,seed,verdict,slope,max_queue,c_hat"]
    doc: dict[str, Any] = {"config_hash": cfg.config_hash(), "seed": cfg.seed, "horizon": horizon}
    if betas:
        verdicts = [stability_probe(cfg, b, horizon, stream=i + 1) for i, b in enumerate(betas)]
        doc["grid"] = [(v.beta, v.verdict, v.slope) for v in verdicts]
    else:
        bs = estimate_beta_star(cfg, horizon=horizon)
        verdicts = bs.trail
        doc["beta_star"] = bs.to_dict()
    for v in verdicts:
        rows += v.csv_rows()
    _write(out, "sweep.csv", "\n".join([f"# {h}" for h in head] + rows) + "\n")
    _write(out, "sweep.json", _dump(doc))
    if not args.quiet:
        sys.stdout.write(_dump(doc))
    return EXIT_OK


def cmd_verify(args, out: Path | None) -> int:
    from .acceptance import run_all

    only = set(args.only) if args.only else None
    results = run_all(only, echo=None if args.quiet else print)
    _write(out, "verify.txt", "".join(r.line + "\n" for r in results))
    failed = [r.number for r in results if not r.passed]
    if failed:
        log.error("failed criteria: %s", ", ".join(map(str, failed)))
        return EXIT_VERIFY
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="randcompute", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="TOML run configuration")
        sp.add_argument("--seed", type=int, help="override run.seed")
        sp.add_argument("--out", help="directory for output files")
        sp.add_argument("--quiet", action="store_true", help="do not echo results to stdout")

    sp = sub.add_parser("analyze", help="spectral, hitting, mixing and cut quantities with bounds")
    common(sp)
    sp.add_argument("--beta", type=float, help="rate used for the latency bounds")
    sp.set_defaults(fn=cmd_analyze)

    sp = sub.add_parser("simulate", help="run one seeded simulation")
    common(sp)
    sp.add_argument("--beta", type=float)
    group = sp.add_mutually_exclusive_group()
    group.add_argument("--rounds", type=int, help="run until this many rounds complete (drain)")
    group.add_argument("--slots", type=int, help="run a fixed number of slots")
    sp.add_argument("--audit", action="store_true", help="also write every consumed root trace")
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("sweep", help="stability probes on a rate grid, or beta* bisection")
    common(sp)
    sp.add_argument("--beta", type=float, action="append", help="grid rate (repeatable)")
    sp.add_argument("--horizon", type=int, help="slots per probe replica")
    sp.add_argument("--replicas", type=int)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("verify", help="run the acceptance suite")
    common(sp, config_required=False)
    sp.add_argument("--only", type=int, action="append", help="criterion number (repeatable)")
    sp.set_defaults(fn=cmd_verify)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    out = Path(args.out) if args.out else None
    try:
        return args.fn(args, out)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SlotCapExceeded, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
