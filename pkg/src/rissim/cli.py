"""Command line entry point: ``rissim run | validate | budget``."""

import argparse
import logging
import sys

from .campaign import ConfigError, RunConfig, derive_link_budget, load_config, run_campaign


def _load(path) -> RunConfig:
    return RunConfig() if path is None else load_config(path)


def cmd_run(args) -> int:
    cfg = _load(args.config)
    changes = {}
    if args.drops is not None:
        changes["drops"] = args.drops
    if args.seed is not None:
        changes["seed"] = args.seed
    if changes:
        cfg = cfg.replace(**changes)
    out = args.out or cfg.output
    res = run_campaign(cfg, workers=args.workers, out=out)
    s = res.summary
    print(f"{cfg.name}: {s['drops']} drops, seed {s['seed']} -> {out}")
    if "rate_gain" in s:
        m = cfg.model_label
        print(f"mean rate without RIS {s['series'][f'rate_without_ris_{m}']['mean']:.4f} bit/s/Hz")
        print(f"mean rate with RIS    {s['series'][f'rate_with_ris_{m}']['mean']:.4f} bit/s/Hz")
        if s["rate_gain"] is not None:
            print(f"RIS gain {100 * s['rate_gain']:.1f} %")
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"{args.config}: ok ({cfg.name}, {cfg.drops} drops)")
    return 0


def cmd_budget(args) -> int:
    cfg = _load(args.config)
    b = derive_link_budget(cfg)
    print(f"subcarriers: {cfg.n_subcarriers}")
    print(f"power per subcarrier: {b.p_tx_dbm:.3f} dBm")
    print(f"noise per subcarrier: {b.noise_dbm:.3f} dBm")
    print(f"SNR (no pathloss): {b.p_tx_dbm - b.noise_dbm:.2f} dB")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rissim", description="RIS-assisted MIMO Monte-Carlo campaigns")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a campaign and write CSV/JSON results")
    run.add_argument("--config", help="JSON config (default: built-in Rician setup)")
    run.add_argument("--drops", type=int, help="override the drop count")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--out", help="output directory (default: config 'output')")
    run.add_argument("--workers", type=int, default=1, help="worker processes")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a config file")
    val.add_argument("--config", required=True)
    val.set_defaults(func=cmd_validate)

    bud = sub.add_parser("budget", help="print the per-subcarrier link budget")
    bud.add_argument("--config")
    bud.set_defaults(func=cmd_budget)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
