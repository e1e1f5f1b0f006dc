"""Command-line entry point: ``flexpd {run,sweep-topology,sweep-size,certify}``.

Exit codes: 0 success, 1 configuration error, 2 divergence or Lyapunov
increase in a certified run, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from .core import ConfigurationError
from .experiments import (ConfigError, build_instance, certificate_failures, emit_csv, load_config,
                          parse_seed_range, run_experiment, size_sweep, topology_sweep,
                          write_summary_csv)
from .graph import GraphError
from .objective import LibsvmError
from .stepsize import CertificateError, certify

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3
DEFAULT_TOPOLOGIES = "path,ring,k_regular:4@0,erdos_renyi:0.9178@0,complete"
DEFAULT_SIZES = "5,10,15,20,25,30"

log = logging.getLogger("flexpd")


def _common(p: argparse.ArgumentParser, out_required=True):
    p.add_argument("--config", required=True, help="JSON experiment configuration")
    p.add_argument("--out", required=out_required, help="output directory for CSV files")
    p.add_argument("--seeds", help="override seeds: 'a..b' (inclusive) or 'a,b,c'")
    p.add_argument("--threads", type=int, help="worker threads for independent runs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flexpd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every (variant, T, seed) and write one CSV per run")
    _common(p)

    p = sub.add_parser("sweep-topology", help="mean cost to epsilon per topology and T")
    _common(p)
    p.add_argument("--topologies", default=DEFAULT_TOPOLOGIES,
                   help=f"comma-separated topology tags (default {DEFAULT_TOPOLOGIES})")

    p = sub.add_parser("sweep-size", help="mean cost to epsilon per network size and T")
    _common(p)
    p.add_argument("--sizes", default=DEFAULT_SIZES, help=f"comma-separated n (default {DEFAULT_SIZES})")

    p = sub.add_parser("certify", help="print certificate stepsizes for the configured problem")
    _common(p, out_required=False)
    return parser


def _load(args):
    cfg = load_config(args.config)
    if args.seeds:
        cfg = replace(cfg, seeds=parse_seed_range(args.seeds))
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = replace(cfg, threads=args.threads)
    return cfg.validate()


def _cmd_run(args, cfg):
    traces = run_experiment(cfg)
    emit_csv(traces, args.out)
    for t in traces:
        m = t.metadata
        last = f"k={t.final[0]} rel_error={t.final[1]:.3g}" if t.rows else t.message
        print(f"{m['variant']} T={m['T']} seed={m['seed']}: {t.status} ({last})")
    return traces


def _cmd_sweep(args, cfg, rows, name):
    os.makedirs(args.out, exist_ok=True)
    write_summary_csv(rows, os.path.join(args.out, name))
    for r in rows:
        print(f"{r.label:>24} n={r.n:<3} gap={r.spectral_gap:.4f} {r.variant} T={r.T}: "
              f"iterations={r.mean_iterations:.1f} comm={r.mean_comm_rounds:.1f} "
              f"({r.converged}/{r.runs} converged)")


def _cmd_certify(args, cfg):
    blocks = []
    for seed in cfg.seeds:
        inst = build_instance(cfg.problem, cfg.topology, seed)
        for spec in cfg.variants:
            if spec.name not in ("F", "G", "C"):
                continue
            for T in spec.T:
                head = f"[{spec.name} T={T} seed={seed}]"
                try:
                    cert = certify(spec.name, inst.net, inst.obj, T, beta=spec.beta_for(T),
                                   alpha_frac=spec.alpha_frac, beta_frac=spec.beta_frac)
                    blocks.append(head + "\n" + cert.to_text())
                except (ConfigurationError, CertificateError) as exc:
                    blocks.append(f"{head}\nerror = {exc}")
    text = "\n\n".join(blocks) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "certificates.txt"), "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        if args.command == "run":
            traces = _cmd_run(args, cfg)
            if certificate_failures(traces):
                for t in certificate_failures(traces):
                    log.error("certified run failed: %s T=%s seed=%s: %s", t.metadata["variant"],
                              t.metadata["T"], t.metadata["seed"], t.message)
                return EXIT_DIVERGED
        elif args.command == "sweep-topology":
            tags = [t.strip() for t in args.topologies.split(",") if t.strip()]
            _cmd_sweep(args, cfg, topology_sweep(cfg, tags), "topology_sweep.csv")
        elif args.command == "sweep-size":
            sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
            _cmd_sweep(args, cfg, size_sweep(cfg, sizes), "size_sweep.csv")
        else:
            _cmd_certify(args, cfg)
    except (ConfigError, GraphError, ConfigurationError, LibsvmError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
