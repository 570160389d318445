"""Command-line front end.

    cgbp chain-bp   --config run.toml --out results/
    cgbp spin-glass --config glass.toml --out results/ --workers 4
    cgbp cgbp       --config cgbp.toml --out results/

Outputs are CSV tables with ``#`` metadata headers plus JSON side files.
Nothing time- or host-dependent is written, so identical config and seed
give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .chain import BpConfig, run_chain_bp
from .config import ConfigError, config_hash, load_config
from .mera import save_layers
from .models import tfim_chain
from .oracle import jw_energy_density
from .operators import ContractError, NormalizationError, SingularityError
from .stitch import GridError, OrderingError, run_cgbp
from .tree import quench_average, records_jsonl

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
SCHEMA = {"chain-bp": 1, "spin-glass": 1, "cgbp": 1}
CHAIN_COLUMNS = ["T", "energy", "sz", "sx", "szsz", "bp_error_estimate", "jw_exact", "true_error", "converged", "iterations"]

log = logging.getLogger("cgbp")


class NumericalFailure(RuntimeError):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, columns, rows, meta: dict) -> None:
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _meta(command, cfg, seed) -> dict:
    return {
        "tool": f"cgbp {__version__}",
        "schema": f"{command}/{SCHEMA[command]}",
        "config_sha256": config_hash(cfg),
        "seed": seed,
    }


def chain_rows(B, bp, T, with_oracle: bool):
    """Warm-started chain BP over a descending grid; one CSV row per temperature."""
    h = tfim_chain(B).template
    rows, warm = [], None
    for t in T:
        cfg = BpConfig(bp.l, 1.0 / t, bp.tol, bp.max_iter, bp.belief_max_dim)
        res = run_chain_bp(h, cfg, warm)
        warm = res
        o = res.observables
        exact = jw_energy_density(B, t) if with_oracle else float("nan")
        rows.append(
            [
                t,
                o["energy"],
                o["sz"],
                o["sx"],
                o["szsz"],
                res.error_estimate,
                exact,
                abs(o["energy"] - exact),
                res.converged,
                res.iterations,
            ]
        )
        log.info("T=%.6g energy=%.12g err_est=%.3g converged=%s", t, o["energy"], res.error_estimate, res.converged)
    return rows


def _check_finite(rows):
    if not np.all(np.isfinite(np.array([r[1] for r in rows], dtype=float))):
        raise NumericalFailure("non-finite energies")


def cmd_chain_bp(cfg, out, seed, workers) -> int:
    T = cfg.grid.values()
    if workers > 1:
        log.info("chain-bp warm-starts along the grid and runs serially")
    rows = chain_rows(cfg.B, cfg.bp, T, cfg.oracle)
    write_csv(os.path.join(out, "chain_bp.csv"), CHAIN_COLUMNS, rows, _meta("chain-bp", cfg, seed))
    _check_finite(rows)
    if cfg.bp.fail_on_nonconvergence and not all(r[8] for r in rows):
        raise NumericalFailure("BP did not converge at some temperatures")
    return EXIT_OK


def cmd_spin_glass(cfg, out, seed, workers) -> int:
    rows, records = [], []
    for B in cfg.B:
        for T in cfg.T:
            q = quench_average(B, T, cfg.depth, cfg.instances, seed, cfg.keep, workers)
            rows.append([B, T, q.q_ea, q.stderr, q.bp_error])
            records.extend(q.records)
            log.info("B=%.4g T=%.4g q_EA=%.6g +- %.2g", B, T, q.q_ea, q.stderr)
    write_csv(
        os.path.join(out, "spin_glass.csv"),
        ["B", "T", "q_ea", "stderr", "bp_error"],
        rows,
        _meta("spin-glass", cfg, seed),
    )
    with open(os.path.join(out, "instances.jsonl"), "w", encoding="utf-8") as fh:
        fh.write(records_jsonl(records))
    if not np.all(np.isfinite([r[2] for r in rows])):
        raise NumericalFailure("non-finite order parameter")
    return EXIT_OK


def cmd_cgbp(cfg, out, seed, workers) -> int:
    h = tfim_chain(cfg.B).template
    T = cfg.grid.values()
    res = run_cgbp(
        h,
        cfg.mera.levels,
        cfg.mera.chi,
        cfg.bp.l,
        T,
        seed=seed,
        sweeps=cfg.mera.sweeps,
        top_sites=cfg.mera.top_sites,
        tol=cfg.bp.tol,
        max_iter=cfg.bp.max_iter,
        belief_max_dim=cfg.bp.belief_max_dim,
        workers=workers,
    )
    meta = _meta("cgbp", cfg, seed)
    exact = np.array([jw_energy_density(cfg.B, t) if cfg.oracle else np.nan for t in T])
    for s in res.series:
        rows = [
            [t, v, e, exact[k], abs(v - exact[k]), c, n]
            for k, (t, v, e, c, n) in enumerate(zip(s.temperatures, s.values, s.bp_errors, s.converged, s.iterations))
        ]
        write_csv(
            os.path.join(out, f"level_{s.level}.csv"),
            ["T", "energy", "bp_error_estimate", "jw_exact", "true_error", "converged", "iterations"],
            rows,
            dict(meta, level=s.level),
        )
    st = res.stitched
    rows = [
        [t, a, v, e, exact[k], abs(v - exact[k])]
        for k, (t, a, v, e) in enumerate(zip(st.temperatures, st.active_level, st.values, st.total_error))
    ]
    write_csv(
        os.path.join(out, "stitched.csv"),
        ["T", "level", "energy", "total_error", "jw_exact", "true_error"],
        rows,
        meta,
    )
    write_json(
        os.path.join(out, "switches.json"),
        {
            "switches": [
                {
                    "label": f"T_{i + 1}",
                    "temperature": sw.temperature,
                    "grid_index": sw.index,
                    "degenerate": sw.degenerate,
                    "candidates": list(sw.candidates),
                }
                for i, sw in enumerate(res.switches)
            ],
            "constants": list(st.constants),
            "mera_energy": None if np.isnan(res.mera_energy) else res.mera_energy,
            "seed": seed,
            "config_sha256": meta["config_sha256"],
        },
    )
    if res.layers:
        save_layers(res.layers, os.path.join(out, "mera_layers.json"))
    if not np.all(np.isfinite(st.values)):
        raise NumericalFailure("non-finite stitched energies")
    active_conv = np.array([res.series[a].converged[k] for k, a in enumerate(st.active_level)])
    if cfg.bp.fail_on_nonconvergence and not active_conv.all():
        raise NumericalFailure("BP did not converge on the active level at some temperatures")
    return EXIT_OK


COMMANDS = {"chain-bp": cmd_chain_bp, "spin-glass": cmd_spin_glass, "cgbp": cmd_cgbp}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cgbp", description="Quantum and coarse-grained belief propagation runs.")
    p.add_argument("--version", action="version", version=f"cgbp {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("chain-bp", "sliding-window BP on the infinite transverse-field Ising chain"),
        ("spin-glass", "quench-averaged q_EA on the Cayley tree"),
        ("cgbp", "BP on MERA-coarse-grained levels with switching and stitching"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=True, help="TOML config file")
        s.add_argument("--out", default=".", help="output directory (created if missing)")
        s.add_argument("--seed", type=int, default=0, help="unsigned 64-bit seed")
        s.add_argument("--workers", type=int, default=1, help="worker processes")
        s.add_argument("--verbose", "-v", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s", stream=sys.stderr
    )
    if not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.command, args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](cfg, args.out, args.seed, args.workers)
    except (GridError, OrderingError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, SingularityError, NormalizationError, ContractError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
