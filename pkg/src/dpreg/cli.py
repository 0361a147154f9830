"""Command line interface: ``dpreg {synth,train-base,postprocess,evaluate,sweep}``."""

import argparse
from concurrent.futures import ProcessPoolExecutor
import json
import os
import sys
import warnings

import numpy as np

from . import errors
from .base_models import load_model, save_model
from .data import generate_synthetic, load_csv, save_csv, split, split_indices
from .evaluation import (empirical_risk, ks_unfairness, summary_json,
                         write_history_csv)
from .experiment import fit_base_models, run_experiment
from .fileio import atomic_write_text
from .pipeline import (OPTIMIZERS, PostprocessConfig, Predictors, dp_postprocess,
                       estimate_marginals, load_policy, save_policy)

# distinct exit codes per error family; argparse itself exits with 2
EXIT_CODES = {
    errors.InvalidParameterError: 3,
    errors.DegenerateGroupError: 4,
    errors.OutOfRangeError: 5,
    errors.RankDeficiencyError: 6,
    errors.PreconditionError: 7,
    errors.ParseError: 8,
}
ERROR_LABELS = {
    errors.InvalidParameterError: "invalid parameter",
    errors.DegenerateGroupError: "degenerate group",
    errors.OutOfRangeError: "value out of range",
    errors.RankDeficiencyError: "rank-deficient design",
    errors.PreconditionError: "precondition violated",
    errors.ParseError: "parse error",
}


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _columns(text):
    return [c.strip() for c in text.split(",") if c.strip()] if text else None


def _add_data_args(p):
    p.add_argument("--data", required=True, help="input CSV with a header row")
    p.add_argument("--features", type=_columns, default=None,
                   help="comma-separated feature columns (default: all but --sensitive/--target)")
    p.add_argument("--sensitive", default="s", help="sensitive attribute column")
    p.add_argument("--target", default="y", help="target column")
    p.add_argument("--split", type=_floats, default=[0.4, 0.4, 0.2],
                   help="train,unlabeled,test fractions")
    p.add_argument("--seed", type=int, default=0, help="seed for the split and the optimizer")


def _add_run_args(p):
    p.add_argument("--T", type=int, default=10_000, help="budget that sets beta and L")
    p.add_argument("--n-iter", type=int, default=None, help="oracle calls to spend (default T)")
    p.add_argument("--optimizer", choices=OPTIMIZERS, default="sgd3-acsa")
    p.add_argument("--B", type=float, default=None, help="signal bound (default max(1, max|y_train|))")
    p.add_argument("--L", type=int, default=None, help="grid half count (default floor(sqrt T))")
    p.add_argument("--beta", type=float, default=None, help="inverse temperature (default T/(8 log2 T))")


def build_parser():
    parser = argparse.ArgumentParser(prog="dpreg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic four-group dataset")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-base", help="fit the base regressor and group classifier")
    _add_data_args(p)
    p.add_argument("--B", type=float, default=None)
    p.add_argument("--ridge", type=float, default=0.0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("postprocess", help="fit a fair policy on the unlabeled split")
    _add_data_args(p)
    _add_run_args(p)
    p.add_argument("--eps", type=_floats, default=[2.0 ** -8], help="one slack or one per group")
    p.add_argument("--models-dir", required=True, help="directory written by train-base")
    p.add_argument("--record-every", type=int, default=100)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("evaluate", help="risk and KS unfairness of a saved policy")
    _add_data_args(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--all-rows", action="store_true", help="evaluate on every row, not the test split")
    p.add_argument("--out", default=None, help="JSON report path (default stdout)")

    p = sub.add_parser("sweep", help="repeat the full pipeline over a list of slacks")
    _add_data_args(p)
    _add_run_args(p)
    p.add_argument("--eps", type=_floats, default=[2.0 ** -i for i in range(1, 9)])
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="summary CSV path")
    return parser


def _load(args):
    return load_csv(args.data, args.features, args.sensitive, args.target)


def _postprocess_config(args, eps, seed):
    return PostprocessConfig(T=args.T, eps=eps if len(eps) > 1 else eps[0], L=args.L,
                             beta=args.beta, B=args.B, optimizer=args.optimizer,
                             n_iter=args.n_iter, seed=seed,
                             record_every=getattr(args, "record_every", 0))


def cmd_synth(args):
    save_csv(generate_synthetic(args.n, args.seed), args.out)
    print(f"wrote {args.n} rows to {args.out}")


def cmd_train_base(args):
    data = _load(args)
    train, _, _ = split(data, args.split, args.seed)
    reg, clf = fit_base_models(train, args.B, ridge=args.ridge)
    os.makedirs(args.out_dir, exist_ok=True)
    save_model(reg, os.path.join(args.out_dir, "regressor.json"))
    save_model(clf, os.path.join(args.out_dir, "classifier.json"))
    p = estimate_marginals(train.sensitive, train.K)
    meta = {"marginals": p.tolist(), "groups": [str(g) for g in data.group_values],
            "split": list(args.split), "seed": args.seed, "n_train": train.n}
    atomic_write_text(os.path.join(args.out_dir, "base.json"), json.dumps(meta, indent=2) + "\n")
    print(f"saved base models to {args.out_dir}")


def cmd_postprocess(args):
    data = _load(args)
    train, unlab, test = split(data, args.split, args.seed)
    reg = load_model(os.path.join(args.models_dir, "regressor.json"))
    clf = load_model(os.path.join(args.models_dir, "classifier.json"))
    p = estimate_marginals(train.sensitive, train.K)
    config = _postprocess_config(args, args.eps, args.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        policy = dp_postprocess(config, p, Predictors(reg, clf), unlab.features,
                                monitor=(test.features, test.targets, test.sensitive))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    os.makedirs(args.out_dir, exist_ok=True)
    save_policy(policy, os.path.join(args.out_dir, "policy.json"),
                os.path.relpath(os.path.join(args.models_dir, "regressor.json"), args.out_dir),
                os.path.relpath(os.path.join(args.models_dir, "classifier.json"), args.out_dir))
    if policy.history:
        write_history_csv(policy.history, os.path.join(args.out_dir, "history.csv"))
        final = policy.history[-1]
        info = {k: v for k, v in policy.info.items() if k != "ladder"}
        atomic_write_text(os.path.join(args.out_dir, "summary.json"), summary_json(final, **info))
    print(f"saved policy to {args.out_dir}")


def cmd_evaluate(args):
    data = _load(args)
    if not args.all_rows:
        _, _, test_idx = split_indices(data, args.split, args.seed)
        data = data.subset(test_idx)
    policy = load_policy(args.policy)
    report = {"n": data.n, "ks_unfairness": ks_unfairness(policy, data.features, data.sensitive,
                                                          data.K).tolist()}
    report["ks_max"] = max(report["ks_unfairness"])
    if data.targets is not None:
        report["risk"] = empirical_risk(policy, data.features, data.targets)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)


def _sweep_job(job):
    data, config, split_frac, split_seed = job
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = run_experiment(data, config, split_frac, split_seed)
    return (res.base_risk, float(np.max(res.base_ks)), res.fair_risk, float(np.max(res.fair_ks)))


def _mean_std(values):
    a = np.asarray(values, dtype=float)
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


def cmd_sweep(args):
    if args.reps < 1 or args.jobs < 1:
        raise errors.InvalidParameterError("--reps and --jobs must be >= 1")
    data = _load(args)
    seeds = np.random.SeedSequence(args.seed).generate_state(args.reps)
    jobs = []
    for eps in args.eps:
        for r in range(args.reps):
            seed = int(seeds[r])
            jobs.append((data, _postprocess_config(args, [eps], seed), args.split, seed))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    lines = ["eps,risk_mean,risk_std,ks_mean,ks_std,base_risk_mean,base_risk_std,base_ks_mean,base_ks_std"]
    for i, eps in enumerate(args.eps):
        block = results[i * args.reps:(i + 1) * args.reps]
        cols = [_mean_std([b[k] for b in block]) for k in (2, 3, 0, 1)]
        lines.append(",".join([format(eps, ".17g")] +
                              [format(v, ".17g") for pair in cols for v in pair]))
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(f"wrote {len(args.eps)} rows to {args.out}")


COMMANDS = {"synth": cmd_synth, "train-base": cmd_train_base, "postprocess": cmd_postprocess,
            "evaluate": cmd_evaluate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except errors.DPRegError as exc:
        for cls, code in EXIT_CODES.items():
            if isinstance(exc, cls):
                print(f"dpreg: {ERROR_LABELS[cls]}: {exc}", file=sys.stderr)
                return code
        print(f"dpreg: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"dpreg: i/o error: {exc}", file=sys.stderr)
        return 9
    return 0


if __name__ == "__main__":
    sys.exit(main())
