"""Command-line interface.

Subcommands: ``gen`` (synthetic data), ``simulate`` (labeling runs -> results
JSON), ``bounds`` (max-error bounds), ``verify-dp`` (exhaustive local-DP
checks), ``mse-compare`` (local-oracle MSE curves as CSV), ``amplify``
(shuffle amplification calculator).  Exit codes: 0 success, 2 usage error,
3 config or invariant violation, 4 I/O error.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, config as config_mod, data as data_mod, local as local_mod
from . import mse as mse_mod, results as results_mod, seeds as seeds_mod, shuffle as shuffle_mod
from .core import PrivacyModel
from .simulate import account_budget, run_algorithm1

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INVARIANT = 3
EXIT_IO = 4


def _add_shape_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, default=1)
    parser.add_argument("--r", type=int, default=1)
    parser.add_argument("--s", type=int, default=10)
    parser.add_argument("--labels", type=int, default=10, help="label domain size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privlabel")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic dataset as CSV files")
    gen.add_argument("--classes", type=int, default=10)
    gen.add_argument("--per-class", type=int, default=100)
    gen.add_argument("--dim", type=int, default=8)
    gen.add_argument("--separation", type=float, default=10.0)
    gen.add_argument("--std", type=float, default=1.0)
    gen.add_argument("--pub-per-class", type=int, default=50)
    gen.add_argument("--multilabel-r", type=int, default=1)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", type=str, required=True, help="output directory")

    sim = sub.add_parser("simulate", help="run the labeling pipeline over trials")
    sim.add_argument("--config", type=str, default=None, help="flat key=value config file")
    sim.add_argument("--seed", type=int, required=True)
    for key in ("dataset", "model", "mechanism", "label-mode", "partition",
                "csv-priv", "csv-pub", "csv-pub-truth", "out"):
        sim.add_argument(f"--{key}", type=str, default=None)
    for key in ("classes", "per-class", "dim", "pub-per-class", "multilabel-r",
                "s", "k", "t", "n-clients", "trials", "workers"):
        sim.add_argument(f"--{key}", type=int, default=None)
    for key in ("separation", "std", "epsilon", "delta", "beta", "dirichlet-alpha"):
        sim.add_argument(f"--{key}", type=float, default=None)

    bounds = sub.add_parser("bounds", help="print max-error bounds eta(beta)")
    bounds.add_argument("--model", type=str, default=None,
                        choices=[m.value for m in PrivacyModel])
    bounds.add_argument("--eps", type=float, required=True)
    bounds.add_argument("--delta", type=float, default=0.0)
    bounds.add_argument("--beta", type=float, default=0.05)
    bounds.add_argument("--n", type=int, default=None)
    _add_shape_flags(bounds)

    verify = sub.add_parser("verify-dp", help="exhaustive local-DP ratio checks")
    verify.add_argument("--eps-list", type=str, default="0.1,ln2,1,2")
    verify.add_argument("--hash-seeds", type=int, default=20)

    cmp_ = sub.add_parser("mse-compare", help="MSE curves of the local oracles as CSV")
    _add_shape_flags(cmp_)
    cmp_.add_argument("--eps-grid", type=str, default="1:6:0.5")
    cmp_.add_argument("--trials", type=int, default=100000)
    cmp_.add_argument("--seed", type=int, default=0)
    cmp_.add_argument("--out", type=str, default=None, help="CSV path (default stdout)")

    amp = sub.add_parser("amplify", help="shuffle amplification calculator")
    direction = amp.add_mutually_exclusive_group(required=True)
    direction.add_argument("--forward", action="store_true")
    direction.add_argument("--invert", action="store_true")
    amp.add_argument("--eps", type=float, required=True,
                     help="local eps0 for --forward, central target for --invert")
    amp.add_argument("--n", type=int, required=True)
    amp.add_argument("--delta", type=float, required=True)
    return parser


# ---------------------------------------------------------------------------
# subcommand bodies


def _cmd_gen(args) -> int:
    spec = data_mod.SyntheticSpec(
        classes=args.classes,
        per_class=args.per_class,
        dim=args.dim,
        separation=args.separation,
        std=args.std,
        pub_per_class=args.pub_per_class,
        multilabel_r=args.multilabel_r,
    )
    records, public = data_mod.generate_synthetic(spec, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_mod.write_records_csv(out / "priv.csv", records)
    data_mod.write_public_csv(out / "pub.csv", public.embeddings)
    data_mod.write_public_csv(out / "pub_truth.csv", public.embeddings, public.true_labels)
    print(f"wrote {records.m} private records and {public.n} public samples to {out}")
    return EXIT_OK


def _load_dataset(cfg: config_mod.ExperimentConfig):
    if cfg.dataset == "synthetic":
        spec = data_mod.SyntheticSpec(
            classes=cfg.classes,
            per_class=cfg.per_class,
            dim=cfg.dim,
            separation=cfg.separation,
            std=cfg.std,
            pub_per_class=cfg.pub_per_class,
            multilabel_r=cfg.multilabel_r,
        )
        return data_mod.generate_synthetic(spec, cfg.seed)
    records = data_mod.load_embeddings_csv(cfg.csv_priv)
    if isinstance(records, data_mod.PublicSet):
        raise ValueError(f"{cfg.csv_priv} has no labels; it cannot be the private dataset")
    pub = data_mod.load_embeddings_csv(cfg.csv_pub)
    if not isinstance(pub, data_mod.PublicSet):
        raise ValueError(f"{cfg.csv_pub} is labeled; public files must leave labels empty")
    truth = None
    if cfg.csv_pub_truth:
        truth_set = data_mod.load_embeddings_csv(cfg.csv_pub_truth, label_count=records.label_count)
        if isinstance(truth_set, data_mod.PublicSet):
            raise ValueError(f"{cfg.csv_pub_truth} carries no labels")
        truth = np.argmax(truth_set.labels, axis=1)
    return records, data_mod.PublicSet(pub.embeddings, truth)


def _one_trial(cfg, records, public, params, trial: int) -> dict:
    trial_seed = int(seeds_mod.generator(cfg.seed, "trial", trial).integers(0, 2 ** 63))
    result = run_algorithm1(
        records,
        public.embeddings,
        params,
        T=cfg.t,
        s=cfg.s,
        k=cfg.k,
        master_seed=trial_seed,
        pub_true_labels=public.true_labels,
        partition_scheme=cfg.partition_scheme(),
        n_clients=cfg.n_clients or None,
        dirichlet_alpha=cfg.dirichlet_alpha,
        mechanism=cfg.mechanism,
        label_mode=cfg.label_mode,
        beta=cfg.beta,
    )
    final = result.iterations[-1].report
    return {
        "acc_pl": result.acc_pl,
        "acc_proxy": result.proxy_accuracy,
        "max_error": result.max_error,
        "labels": [int(v) for v in final.hard],
        "_theoretical_eta": final.theoretical_eta,
        "_ledger": result.ledger,
    }


def _cmd_simulate(args) -> int:
    flags = {}
    for key, value in vars(args).items():
        if key in ("command", "config"):
            continue
        flags[key.replace("-", "_")] = value
    file_values = config_mod.load_config_file(args.config) if args.config else {}
    cfg = config_mod.build_config(file_values, flags)
    records, public = _load_dataset(cfg)
    params = cfg.privacy_params(records.label_count, records.r)

    trials = list(range(cfg.trials))
    if cfg.workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(lambda i: _one_trial(cfg, records, public, params, i), trials))
    else:
        rows = [_one_trial(cfg, records, public, params, i) for i in trials]

    ledger = rows[-1].pop("_ledger")
    theoretical_eta = rows[0].get("_theoretical_eta")
    per_trial = [{k: v for k, v in row.items() if not k.startswith("_")} for row in rows]
    doc = results_mod.build_results(
        cfg.as_recorded_dict(), per_trial, account_budget(ledger, cfg.k, cfg.s), theoretical_eta
    )
    if cfg.out:
        results_mod.write_results(doc, cfg.out)
        print(f"wrote results to {cfg.out}")
    else:
        import json

        print(json.dumps(doc["summary"], indent=2))
    return EXIT_OK


def _cmd_bounds(args) -> int:
    rows = analysis.bounds_table(
        args.model, args.eps, args.delta, args.k, args.r, args.s, args.labels, args.beta, args.n
    )
    for name, eta in rows.items():
        print(f"{name} eta = {eta:.6g}")
    return EXIT_OK


def _parse_eps_list(text: str) -> list[float]:
    out = []
    for part in text.split(","):
        part = part.strip()
        out.append(math.log(2.0) if part == "ln2" else float(part))
    return out


def _cmd_verify_dp(args) -> int:
    eps_values = _parse_eps_list(args.eps_list)
    failures = 0
    for eps in eps_values:
        inputs, pmf = local_mod.rr_bit_pmfs(eps)
        ratio = local_mod.verify_local_dp(inputs, pmf)
        ok = ratio <= eps + 1e-9
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'} rr-bit eps={eps:.6g} max_ratio={ratio:.6g}")
        for c in (1, 2):
            params = local_mod.CollisionParams.for_budget(4, c, eps)
            worst = 0.0
            for seed_idx in range(args.hash_seeds):
                rng = seeds_mod.generator(7, "verify-dp", eps, c, seed_idx)
                hash_seed = int(rng.integers(0, 2 ** 63))
                inputs, pmf = local_mod.collision_pmfs(params, hash_seed)
                worst = max(worst, local_mod.verify_local_dp(inputs, pmf))
            ok = worst <= eps + 1e-9
            failures += not ok
            print(f"{'PASS' if ok else 'FAIL'} collision d=4 c={c} eps={eps:.6g} max_ratio={worst:.6g}")
        for d, c, l, alpha in ((4, 1, 1, 1), (5, 2, 2, 1), (5, 2, 2, 2)):
            params = local_mod.GseParams(d, c, eps, l, alpha)
            inputs, pmf = local_mod.gse_pmfs(params)
            ratio = local_mod.verify_local_dp(inputs, pmf)
            ok = ratio <= eps + 1e-9
            failures += not ok
            print(
                f"{'PASS' if ok else 'FAIL'} gse d={d} c={c} l={l} alpha={alpha} "
                f"eps={eps:.6g} max_ratio={ratio:.6g}"
            )
    if failures:
        print(f"{failures} check(s) failed")
        return EXIT_INVARIANT
    print("all local-DP checks passed")
    return EXIT_OK


def _cmd_mse_compare(args) -> int:
    grid = mse_mod.parse_grid(args.eps_grid)
    curves = mse_mod.mse_comparison(
        args.s, args.labels, args.k, args.r, grid, args.trials, args.seed
    )
    lines = ["eps,collision_mse,separation_mse,concatenation_mse"]
    for eps, col, sep, cat in curves.rows():
        lines.append(f"{eps:.6g},{col:.8g},{sep:.8g},{cat:.8g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_amplify(args) -> int:
    if args.forward:
        eps = shuffle_mod.amplify_forward(args.eps, args.n, args.delta)
        print(f"central eps = {eps:.9g}")
    else:
        eps0 = shuffle_mod.amplify_invert(args.eps, args.n, args.delta)
        print(f"local eps0 = {eps0:.9g}")
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "simulate": _cmd_simulate,
    "bounds": _cmd_bounds,
    "verify-dp": _cmd_verify_dp,
    "mse-compare": _cmd_mse_compare,
    "amplify": _cmd_amplify,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
