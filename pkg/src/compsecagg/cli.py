"""Command-line entry point: ``compsecagg {simulate,verify-costs,analyze-union,train}``.

Exit codes: 0 success, 1 a reproduced value is outside its tolerance, 2 usage error.
Every subcommand is deterministic for a fixed ``--seed`` and any ``--threads``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .aggregation import UnionStrategy, compressed_secure_agg
from .coder import sep_agg, topbinary_encode
from .costs import CostScenario, PUBLISHED_ROWS, cost_table, format_cost_table, published_row, reconcile
from .field import FixedPointParams
from .rng import make_rng, spawn

EXIT_OK, EXIT_TOLERANCE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _rate(text: str) -> float:
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"expected 0 < rho <= 1, got {text}")
    return v


def _strategy(name: str, q: int) -> UnionStrategy:
    if name == "secure":
        return UnionStrategy.secure(q)
    return {"partial": UnionStrategy.partial, "plaintext": UnionStrategy.plaintext,
            "none": UnionStrategy.none}[name]()


def _emit(text: str, path) -> None:
    sys.stdout.write(text)
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    rng = make_rng(args.seed)
    data_rng, proto_rng = spawn(rng, 2)
    strategy = _strategy(args.strategy, args.q)
    fp = FixedPointParams(args.total_bits, args.frac_bits)
    updates = [topbinary_encode(data_rng.normal(0.0, args.scale, size=args.dim), args.rho)
               for _ in range(args.clients)]
    result, transcript = compressed_secure_agg(updates, args.servers, strategy, fp, proto_rng,
                                               threads=args.threads)
    scn = CostScenario(args.strategy, args.clients, args.dim, args.servers, rho=args.rho,
                       q=args.q if args.strategy == "secure" else None,
                       union_size=int(result.V.size), factor_bits=fp.total_bits)
    report = reconcile(scn, transcript)

    reference = sep_agg(updates)
    alpha_ref = sum(u.alpha for u in updates)
    alpha_err = abs(result.alpha - alpha_ref)
    alpha_ok = alpha_err <= args.clients * 2.0**-fp.frac_bits
    signs_ok = True
    if strategy.exact:
        signs_ok = bool(np.array_equal(result.D, sum(u.dense_signs() for u in updates)))
    max_err = float(np.max(np.abs(result.U - reference))) if args.dim else 0.0

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    transcript.write(out / "transcript.jsonl")
    (out / "ledger.csv").write_text(transcript.ledger().to_csv())
    (out / "reconcile.csv").write_text(report.to_csv())
    lines = [
        f"strategy,{strategy}",
        f"clients,{args.clients}",
        f"servers,{args.servers}",
        f"dim,{args.dim}",
        f"rho,{args.rho}",
        f"union_size,{result.V.size}",
        f"messages,{len(transcript)}",
        f"measured_bits,{transcript.total_bits}",
        f"analytic_bits,{sum(r[3] for r in report.rows)}",
        f"ledger_matches,{report.ok}",
        f"alpha_abs_error,{alpha_err:.3e}",
        f"signs_exact,{signs_ok if strategy.exact else 'n/a'}",
        f"max_abs_error_vs_sepagg,{max_err:.3e}",
    ]
    _emit("\n".join(lines) + "\n", out / "summary.csv")
    sys.stdout.write(report.to_text())
    return EXIT_OK if report.ok and alpha_ok and signs_ok else EXIT_TOLERANCE


def cmd_verify_costs(args) -> int:
    if args.row:
        try:
            rows = [published_row(r) for r in args.row]
        except KeyError as e:
            names = ", ".join(r.name for r in PUBLISHED_ROWS)
            raise UsageError(f"{e.args[0]}; known rows: {names}") from None
    else:
        rows = PUBLISHED_ROWS
    records = cost_table(rows)
    _emit(format_cost_table(records, csv=args.csv), args.out)
    return EXIT_OK if all(r["ok"] for r in records) else EXIT_TOLERANCE


def cmd_analyze_union(args) -> int:
    from .union_stats import (expected_false_negatives, expected_false_negatives_exact,
                              format_percent, prob_alone, published_table_report,
                              simulate_secure_union)

    if args.published:
        rows, ok = published_table_report()
        cols = ["table", "N", "rho", "k", "C", "q", "reproduced", "published", "ok"]
        text = ",".join(cols) + "\n" + "".join(
            ",".join(str(r[c]) for c in cols) + "\n" for r in rows)
        _emit(text, args.out)
        return EXIT_OK if ok else EXIT_TOLERANCE

    k = int(args.dim * args.rho) if args.k is None else args.k
    if not 0 <= k <= args.dim:
        raise UsageError(f"support size k={k} outside [0, {args.dim}]")
    lines = [
        f"N,{args.dim}", f"k,{k}", f"C,{args.clients}", f"q,{args.q}",
        f"expected_false_negatives,{expected_false_negatives(args.dim, k, args.clients, args.q):.4f}",
        f"expected_false_negatives_nonzero_masks,"
        f"{expected_false_negatives_exact(args.dim, k, args.clients, args.q):.4f}",
        f"prob_alone,{format_percent(prob_alone(args.dim, k, args.clients, args.q))}",
    ]
    if args.trials:
        st = simulate_secure_union(args.dim, k, args.clients, args.q, args.trials,
                                   make_rng(args.seed), servers=args.servers)
        lo, hi = st.mean_ci(args.level)
        mlo, mhi = st.miss_rate_ci(args.level)
        lines += [
            f"trials,{st.trials}",
            f"mc_false_negatives_mean,{st.mean:.4f}",
            f"mc_false_negatives_ci,{lo:.4f},{hi:.4f}",
            f"mc_multi_held_miss_rate,{st.miss_rate:.6f}",
            f"mc_miss_rate_ci,{mlo:.6f},{mhi:.6f}",
            f"mc_false_positives,{st.false_positives}",
        ]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    from dataclasses import replace

    from .data import load_idx_dataset, make_blobs, partition_iid, train_test_split
    from .fl import TrainConfig, metrics_csv, run_training
    from .models import ToyModel

    if (args.idx_images is None) != (args.idx_labels is None):
        raise UsageError("--idx-images and --idx-labels go together")
    if args.idx_images:
        ds = load_idx_dataset(args.idx_images, args.idx_labels)
    else:
        ds = make_blobs(args.samples, args.dim, 2, args.separation, seed=args.seed)
    train, test = train_test_split(ds, args.test_fraction, seed=args.seed)
    shards = partition_iid(train, args.clients, seed=args.seed)
    model = ToyModel(args.arch, ds.X.shape[1], max(2, ds.n_classes), args.hidden)
    cfg = TrainConfig(clients=args.clients, servers=args.servers, local_steps=args.local_steps,
                      rounds=args.rounds, rho=args.rho, lr=args.lr, batch_size=args.batch_size,
                      momentum=args.momentum, strategy=_strategy(args.strategy, args.q),
                      compress=not args.uncompressed, seed=args.seed, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    state = run_training(model, shards, test, cfg)
    (out / "metrics.csv").write_text(metrics_csv(state.history))
    final = state.history[-1].test_acc if state.history else float("nan")
    lines = [f"final_test_acc,{final:.6f}"]
    status = EXIT_OK
    if args.compare:
        ref = run_training(model, shards, test, replace(cfg, compress=False))
        (out / "metrics_fedavg.csv").write_text(metrics_csv(ref.history))
        ref_final = ref.history[-1].test_acc if ref.history else float("nan")
        gap = 100 * (ref_final - final)
        lines += [f"fedavg_final_test_acc,{ref_final:.6f}", f"gap_points,{gap:.4f}",
                  f"within_tolerance,{abs(gap) <= args.tolerance}"]
        if not abs(gap) <= args.tolerance:
            status = EXIT_TOLERANCE
    _emit("\n".join(lines) + "\n", out / "summary.csv")
    return status


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="compsecagg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, dim=1000):
        sp.add_argument("--clients", type=_positive, default=5)
        sp.add_argument("--servers", type=_positive, default=2)
        sp.add_argument("--dim", type=_positive, default=dim)
        sp.add_argument("--rho", type=_rate, default=0.1)
        sp.add_argument("--q", type=_positive, default=10)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=_positive, default=1)

    sp = sub.add_parser("simulate", help="one aggregation round on random updates")
    common(sp)
    sp.add_argument("--strategy", choices=["partial", "secure", "plaintext", "none"],
                    default="partial")
    sp.add_argument("--scale", type=float, default=0.01, help="std of the random updates")
    sp.add_argument("--total-bits", type=_positive, default=32)
    sp.add_argument("--frac-bits", type=int, default=16)
    sp.add_argument("--out", default="sim_out")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify-costs", help="reproduce the published communication costs")
    sp.add_argument("--row", action="append", help="row name, repeatable (default: all)")
    sp.add_argument("--csv", action="store_true")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_verify_costs)

    sp = sub.add_parser("analyze-union", help="masked-union false negatives and leakage")
    common(sp, dim=61706)
    sp.set_defaults(q=1)
    sp.add_argument("--k", type=int, default=None, help="support size (default floor(N*rho))")
    sp.add_argument("--trials", type=int, default=0, help="Monte-Carlo trials of the protocol")
    sp.add_argument("--level", type=float, default=0.99)
    sp.add_argument("--published", action="store_true", help="recompute the published tables")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_analyze_union)

    sp = sub.add_parser("train", help="federated training on toy data")
    common(sp, dim=20)
    sp.add_argument("--strategy", choices=["partial", "secure", "plaintext", "none"],
                    default="partial")
    sp.add_argument("--rounds", type=int, default=100)
    sp.add_argument("--local-steps", type=_positive, default=10)
    sp.add_argument("--lr", type=float, default=0.05)
    sp.add_argument("--batch-size", type=_positive, default=32)
    sp.add_argument("--momentum", type=float, default=0.0)
    sp.add_argument("--arch", choices=["logreg", "mlp"], default="logreg")
    sp.add_argument("--hidden", type=_positive, default=16)
    sp.add_argument("--samples", type=_positive, default=3000)
    sp.add_argument("--separation", type=float, default=3.0)
    sp.add_argument("--test-fraction", type=float, default=0.25)
    sp.add_argument("--idx-images", default=None)
    sp.add_argument("--idx-labels", default=None)
    sp.add_argument("--uncompressed", action="store_true", help="plain FedAvg")
    sp.add_argument("--compare", action="store_true", help="also run FedAvg and report the gap")
    sp.add_argument("--tolerance", type=float, default=2.0, help="allowed gap in points")
    sp.add_argument("--out", default="train_out")
    sp.set_defaults(func=cmd_train)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError, OverflowError) as e:
        print(f"compsecagg {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
