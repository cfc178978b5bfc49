"""Command-line interface.

Exit codes: 0 success, 1 run failure (divergence or failed checks),
2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .harness import (
    ConfigError,
    TrainingDiverged,
    config_from_dict,
    default_out_root,
    run_training,
    sweep,
)
from .theory import (
    jsd_multi,
    mutual_information,
    random_joint,
    random_uniform_prior_joint,
    conditional_entropy_y_given_x,
    entropy,
    theorem1_degenerate,
    theorem1_lp_oracle,
    theorem3_check,
    u_of_g,
)


def _parse_set(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _load_config(path: str, overrides: list[str]):
    with open(path) as fh:
        data = json.load(fh)
    data.update(_parse_set(overrides))
    return config_from_dict(data)


def _cmd_train(args) -> int:
    config = _load_config(args.config, args.set or [])
    if config.out_dir is None:
        from dataclasses import replace

        config = replace(config, out_dir=str(Path(default_out_root()) / config.run_id))
    record = run_training(config)
    print(f"run {record.run_id} finished in {record.wall_clock:.1f}s -> {config.out_dir}")
    for name in ("mmd", "prop_digit0"):
        try:
            print(f"  final {name}: {record.last(name):.6f}")
        except KeyError:
            pass
    return 0


def _cmd_sweep(args) -> int:
    template = _load_config(args.config, args.set or [])
    variants = args.variants.split(",")
    values = [float(v) for v in args.values.split(",")] if args.values else None
    out_root = args.out or str(Path(default_out_root()) / f"sweep-{args.axis}")
    results = sweep(args.axis, template, variants, out_root, values=values, workers=args.workers)
    failed = [r for r in results if r[1] != "ok"]
    for run_id, status, message in results:
        line = f"{run_id}: {status}"
        if message:
            line += f" ({message})"
        print(line)
    print(f"sweep complete: {len(results) - len(failed)}/{len(results)} ok -> {out_root}")
    return 1 if failed else 0


def _theory_battery(instances: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    worst = {"lp_mismatches": 0, "identity_gap": 0.0, "u_gap": 0.0, "bound_slack": np.inf}
    for i in range(instances):
        k = int(rng.integers(2, 7))
        row = rng.dirichlet(np.ones(k))
        if not np.array_equal(theorem1_lp_oracle(row), theorem1_degenerate(row[None, :])[0]):
            worst["lp_mismatches"] += 1

        m = int(rng.integers(2, 9))
        j = random_uniform_prior_joint(m, k, seed=int(rng.integers(0, 2**31)))
        mi = mutual_information(j)
        alt = entropy(j.marginal_y()) - conditional_entropy_y_given_x(j)
        jsd = jsd_multi(list(j.conditional_x_given_y()))
        worst["identity_gap"] = max(worst["identity_gap"], abs(mi - alt), abs(mi - jsd))

        cond = rng.dirichlet(np.ones(m), size=k)
        expect = -k * np.log(k) + k * jsd_multi(list(cond))
        worst["u_gap"] = max(worst["u_gap"], abs(u_of_g(cond) - expect))

        p = random_joint(m, k, seed=int(rng.integers(0, 2**31)))
        q = random_joint(m, k, seed=int(rng.integers(0, 2**31)))
        qc = rng.dirichlet(np.ones(k), size=m)
        report = theorem3_check(p, q, qc)
        if np.isfinite(report.slack):
            worst["bound_slack"] = min(worst["bound_slack"], report.slack)

    passed = (
        worst["lp_mismatches"] == 0
        and worst["identity_gap"] < 1e-10
        and worst["u_gap"] < 1e-10
        and worst["bound_slack"] >= -1e-9
    )
    return {
        "instances": instances,
        "seed": seed,
        "lp_mismatches": worst["lp_mismatches"],
        "worst_identity_gap": worst["identity_gap"],
        "worst_u_gap": worst["u_gap"],
        "worst_bound_slack": worst["bound_slack"],
        "passed": passed,
    }


def _cmd_theory_check(args) -> int:
    report = _theory_battery(args.instances, args.seed)
    print(f"theory check on {report['instances']} instances (seed {report['seed']}):")
    print(f"  degenerate-optimum LP mismatches: {report['lp_mismatches']}")
    print(f"  worst mutual-information identity gap: {report['worst_identity_gap']:.3e}")
    print(f"  worst twin-game value gap: {report['worst_u_gap']:.3e}")
    print(f"  worst joint-bound slack: {report['worst_bound_slack']:.3e}")
    print("PASS" if report["passed"] else "FAIL")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(report, fh, indent=2)
    return 0 if report["passed"] else 1


def _cmd_mnist_prepare(args) -> int:
    from .harness import prepare_mnist

    meta = prepare_mnist(
        args.images,
        args.labels,
        args.out,
        seed=args.seed,
        disjoint_zeros=args.disjoint_zeros,
        per_digit=args.per_digit,
    )
    print(
        f"prepared overlap groups under {args.out}; oracle held-out accuracy "
        f"{meta['oracle_heldout_accuracy']:.4f}"
    )
    if meta["oracle_heldout_accuracy"] < 0.99:
        print("warning: oracle accuracy below 0.99", file=sys.stderr)
        return 1
    return 0


def _cmd_plot(args) -> int:
    from .plots import plot_run_dir

    paths = plot_run_dir(args.run, args.out)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tacgan")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training config")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_train.set_defaults(fn=_cmd_train)

    p_sweep = sub.add_parser("sweep", help="run a dm or lambda sweep")
    p_sweep.add_argument("--axis", required=True, choices=["dm", "lambda"])
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--variants", default="acgan,tacgan")
    p_sweep.add_argument("--values", default=None)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_theory = sub.add_parser("theory-check", help="run the theorem oracle battery")
    p_theory.add_argument("--instances", type=int, default=1000)
    p_theory.add_argument("--seed", type=int, default=0)
    p_theory.add_argument("--json", default=None)
    p_theory.set_defaults(fn=_cmd_theory_check)

    p_prep = sub.add_parser("mnist-prepare", help="build overlap groups and the oracle")
    p_prep.add_argument("--images", required=True)
    p_prep.add_argument("--labels", required=True)
    p_prep.add_argument("--out", required=True)
    p_prep.add_argument("--seed", type=int, default=0)
    p_prep.add_argument("--per-digit", type=int, default=5000)
    p_prep.add_argument("--disjoint-zeros", action="store_true")
    p_prep.set_defaults(fn=_cmd_mnist_prepare)

    p_plot = sub.add_parser("plot", help="emit CSV/SVG figures for a run directory")
    p_plot.add_argument("--run", required=True)
    p_plot.add_argument("--out", default=None)
    p_plot.set_defaults(fn=_cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
