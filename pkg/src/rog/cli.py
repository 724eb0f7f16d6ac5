"""Command-line surface: synthesize data, fit/evaluate models, run the
numerical theory checks, and run the benchmark suite.

Exit codes: 0 success, 2 usage or config error, 3 data error, 4 numeric
failure. Every command writes its fully-resolved configuration to
``<out>/config.json`` so runs are diffable and reproducible.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    breakdown_sweep,
    lemma1_limits,
    theorem1_report,
    write_report_csv,
    write_report_json,
)
from .classifier import (
    GaussianClassifierParams,
    accuracy,
    fit_logistic_baseline,
    make_params,
    predict,
)
from .data import (
    FeatureSet,
    NoiseSpec,
    SynthSpec,
    inject_noise,
    load_feature_set,
    mask_path,
    save_feature_set,
    save_mask,
    synthesize,
)
from .ensemble import (
    EnsembleModel,
    LayeredFeatureSet,
    build_rog,
    load_ensemble,
    predict_ensemble,
    save_ensemble,
)
from .errors import (
    ConfigError,
    DegenerateError,
    DimensionError,
    EmptyClassError,
    EmptyClusterError,
    ParseError,
    SingularCovarianceError,
    SpecError,
    ValidationError,
)
from .estimators import (
    McdConfig,
    default_subset_size,
    lts_mean,
    mcd_estimate,
    sample_estimate,
    trimmed_kmeans,
)

METRICS_COLUMNS = ["split", "estimator", "noise_kind", "rate", "accuracy", "nll"]

USAGE_ERRORS = (SpecError, ConfigError)
DATA_ERRORS = (ParseError, ValidationError, DimensionError, EmptyClassError)
NUMERIC_ERRORS = (SingularCovarianceError, DegenerateError, EmptyClusterError)


# ---------------------------------------------------------------------------
# plumbing


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out: Path, args) -> None:
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    (out / "config.json").write_text(json.dumps(resolved, indent=2, default=str))


def _apply_config_file(args, parser_defaults: dict) -> None:
    """Merge a JSON config file under the flags: flags win when given."""
    if not getattr(args, "config", None):
        return
    try:
        file_cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
    if not isinstance(file_cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    for key, value in file_cfg.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ConfigError(f"unknown config key {key!r}")
        # a flag left at its parser default is overridable by the file
        if getattr(args, attr) == parser_defaults.get(attr):
            setattr(args, attr, value)


def _write_metrics(out: Path, rows: list[dict]) -> None:
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def _mcd_config(args) -> McdConfig:
    return McdConfig(
        subset_size_per_class=getattr(args, "keep_per_class", None),
        max_iters=args.imax,
        restarts=args.restarts,
        mode="exact" if getattr(args, "exact", False) else "cstep",
    )


def _load_layers(paths: list[str]) -> LayeredFeatureSet:
    return LayeredFeatureSet([load_feature_set(p) for p in paths])


# ---------------------------------------------------------------------------
# synth


def _ring_means(rng: np.random.Generator, classes: int, dim: int, radius: float) -> np.ndarray:
    """Regular polygon of class means in a random 2-plane of R^dim."""
    basis = np.linalg.qr(rng.standard_normal((dim, 2)))[0]
    ang = 2.0 * np.pi * np.arange(classes) / classes
    return (np.stack([np.cos(ang), np.sin(ang)], axis=1) * radius) @ basis.T


def cmd_synth(args) -> int:
    out = _out_dir(args)
    rng = np.random.default_rng(args.seed)
    dirs = rng.standard_normal((args.classes, args.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    means = dirs * args.mean_scale

    def spec(n_per_class: int, delta: float, seed: int) -> SynthSpec:
        return SynthSpec(
            class_means=means,
            sigma2=args.sigma2,
            out_mean=np.zeros(args.dim),
            out_sigma2=args.out_sigma2,
            delta_out=delta,
            n_per_class=n_per_class,
            seed=seed,
        )

    train, train_mask = synthesize(spec(args.n_per_class, args.delta_out, args.seed))
    val, _ = synthesize(spec(max(1, args.n_val // args.classes), args.delta_out, args.seed + 1))
    test, _ = synthesize(spec(max(1, args.n_test // args.classes), 0.0, args.seed + 2))

    save_feature_set(train, out / "train.rogf")
    save_mask(train_mask, mask_path(out / "train.rogf"))
    save_feature_set(val, out / "val.rogf")
    save_feature_set(test, out / "test.rogf")

    if args.noise != "none" and args.rate > 0:
        flip_map = {c: (c + 1) % args.classes for c in range(args.classes)}
        nspec = NoiseSpec(
            kind=args.noise,
            rate=args.rate,
            flip_map=flip_map if args.noise == "flip" else None,
            seed=args.seed + 3,
        )
        noisy, noise_mask = inject_noise(train, nspec)
        save_feature_set(noisy, out / "train.rogf")
        save_mask(train_mask | noise_mask, mask_path(out / "train.rogf"))

    _write_config(out, args)
    print(f"wrote train/val/test rogf files to {out}")
    return 0


# ---------------------------------------------------------------------------
# fit


def _fit_single(ds: FeatureSet, args) -> GaussianClassifierParams:
    c = ds.num_classes
    uniform = np.full(c, 1.0 / c)
    if args.estimator == "sample":
        stats, tied, _ = sample_estimate(ds)
        return make_params(np.vstack([s.mean for s in stats]), tied, uniform)
    if args.estimator == "mcd":
        fit, tied, priors = mcd_estimate(ds, _mcd_config(args), seed=args.seed)
        return make_params(np.vstack([f.stats.mean for f in fit.class_fits]), tied, priors)
    if args.estimator == "tkm":
        stats, tied, _ = trimmed_kmeans(ds, trim_fraction=args.trim, iters=args.imax)
        return make_params(np.vstack([s.mean for s in stats]), tied, uniform)
    if args.estimator == "lts-euclid":
        means, pooled = [], np.zeros((ds.dim, ds.dim))
        for c_ in range(ds.num_classes):
            pts = ds.features[ds.class_indices(c_)]
            k = default_subset_size(pts.shape[0], ds.dim)
            mu = lts_mean(pts, k, restarts=args.restarts, seed=args.seed)
            means.append(mu)
            centered = pts - mu
            pooled += centered.T @ centered
        return make_params(np.vstack(means), pooled / ds.n, uniform)
    raise ConfigError(f"unknown estimator {args.estimator!r}")


def cmd_fit(args) -> int:
    out = _out_dir(args)
    train = _load_layers(args.layer)
    model_dir = out / "model"
    model_dir.mkdir(exist_ok=True)

    if args.estimator == "mcd" and len(train) >= 1 and (args.val_layer or len(train) > 1):
        val = _load_layers(args.val_layer) if args.val_layer else None
        model = build_rog(train, val, _mcd_config(args), keep=args.keep, seed=args.seed)
    else:
        params = [_fit_single(layer, args) for layer in train.layers]
        weights = np.full(len(params), 1.0 / len(params))
        model = EnsembleModel(
            layer_ids=[f"layer{i}" for i in range(len(params))],
            layer_params=params,
            weights=weights,
        )
    save_ensemble(model, model_dir)
    _write_config(out, args)
    print(f"wrote model with {len(model.layer_params)} layer(s) to {model_dir}")
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    out = _out_dir(args)
    model = load_ensemble(Path(args.model))
    test = _load_layers(args.layer)
    if len(test) != len(model.layer_params):
        raise DimensionError(
            f"model has {len(model.layer_params)} layers, got {len(test)} test files"
        )
    xs = [layer.features for layer in test.layers]
    pred, probs = predict_ensemble(model, xs)
    labels = test.labels
    acc = accuracy(pred, labels)
    nll = float(-np.mean(np.log(np.maximum(probs[np.arange(labels.size), labels], 1e-300))))
    per_class = {
        str(c): float((pred[labels == c] == c).mean()) for c in range(test.num_classes)
    }
    rows = [
        {
            "split": args.split,
            "estimator": args.estimator,
            "noise_kind": args.noise,
            "rate": args.rate,
            "accuracy": f"{acc:.6f}",
            "nll": f"{nll:.6f}",
        }
    ]
    _write_metrics(out, rows)
    (out / "metrics.json").write_text(
        json.dumps({"accuracy": acc, "nll": nll, "per_class_accuracy": per_class}, indent=2)
    )
    _write_config(out, args)
    print(f"accuracy {acc:.4f}  nll {nll:.4f}")
    return 0


# ---------------------------------------------------------------------------
# theory


def cmd_theory(args) -> int:
    out = _out_dir(args)
    report_lines = ["# Numerical theory checks", ""]
    cfg = McdConfig(restarts=args.restarts, max_iters=args.imax)

    if args.check in ("theorem1", "all"):
        means = np.vstack([np.full(args.dim, 0.0), np.full(args.dim, 0.0)])
        means[0, 0], means[1, 0] = args.mean_scale, -args.mean_scale
        spec = SynthSpec(
            class_means=means,
            sigma2=1.0,
            out_mean=np.zeros(args.dim),
            out_sigma2=4.0,
            delta_out=args.delta_out,
            n_per_class=args.n_per_class,
            seed=args.seed,
        )
        reports = theorem1_report(spec, cfg, n_grid=args.n_grid, seed=args.seed)
        write_report_csv(reports, out / "theorem1.csv")
        write_report_json(reports, out / "theorem1.json")
        report_lines += ["## Estimator limit check", ""]
        for rep in reports:
            row = rep.row()
            report_lines.append(
                f"- n={row['n']}: err_mcd_l1={row['err_mcd_l1']:.4f} "
                f"err_sample_l1={row['err_sample_l1']:.4f} "
                f"margin_ratio={row['margin_ratio']:.4f}"
            )
        report_lines.append("")

    if args.check in ("lemma1", "all"):
        spec = SynthSpec(
            class_means=np.array([[2.0], [-2.0]]),
            sigma2=1.0,
            out_mean=np.zeros(1),
            out_sigma2=4.0,
            delta_out=args.delta_out,
            n_per_class=args.n_per_class,
            seed=args.seed,
        )
        limits = lemma1_limits(spec)
        ds, _ = synthesize(spec)
        stats, tied, _ = sample_estimate(ds)
        report_lines += [
            "## Mixture limit check (closed form vs empirical)",
            "",
            "| quantity | closed form | empirical |",
            "|---|---|---|",
            f"| class-0 mixture mean | {limits.mix_mean[0, 0]:.4f} | {stats[0].mean[0]:.4f} |",
            f"| mixture variance | {limits.mix_cov_per_class[0][0, 0]:.4f} | {stats[0].covariance[0, 0]:.4f} |",
            "",
        ]

    if args.check in ("breakdown", "all"):
        rng = np.random.default_rng(args.seed)
        pts = rng.standard_normal((100, 2))
        fractions = [round(0.05 * i, 2) for i in range(10)]
        report_lines += ["## Breakdown sweep", ""]
        with open(out / "breakdown.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["estimator", "fraction", "displacement", "log_eig_range"])
            for estimator in ("mcd", "sample"):
                curve, frac = breakdown_sweep(
                    pts, estimator, fractions, cfg, seed=args.seed
                )
                for p in curve:
                    writer.writerow(
                        [estimator, p.fraction,
                         f"{p.displacement:.6f}", f"{p.log_eig_range:.6f}"]
                    )
                report_lines.append(
                    f"- {estimator}: first fraction over 10x the clean error: "
                    f"{frac if frac <= 1 else 'none observed'}"
                )
        report_lines.append("")

    (out / "report.md").write_text("\n".join(report_lines))
    _write_config(out, args)
    print(f"wrote theory reports to {out}")
    return 0


# ---------------------------------------------------------------------------
# bench


def bench_split(
    rng: np.random.Generator,
    means_by_layer: list[np.ndarray],
    n_per_class: int,
    rate: float,
    classes: int,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """One split of the benchmark: layered ring features plus cyclic flips."""
    true = np.repeat(np.arange(classes), n_per_class)
    dim = means_by_layer[0].shape[1]
    layers = [m[true] + rng.standard_normal((true.size, dim)) for m in means_by_layer]
    labels = true
    if rate > 0:
        flip_map = {c: (c + 1) % classes for c in range(classes)}
        fs = FeatureSet(features=layers[1], labels=true, num_classes=classes)
        nspec = NoiseSpec(
            kind="flip", rate=rate, flip_map=flip_map, seed=int(rng.integers(2**31))
        )
        labels = inject_noise(fs, nspec)[0].labels
    return labels, layers


def bench_suite(
    deltas: list[float],
    seed: int = 0,
    classes: int = 10,
    dim: int = 16,
    n_per_class: int = 2000,
    n_val: int = 1000,
    keep: int = 500,
    n_test_per_class: int = 2000,
    radius: float = 3.0,
    weak_scale: float = 0.5,
    restarts: int = 10,
    imax: int = 10,
) -> dict[float, dict[str, float]]:
    """Test accuracy of five methods on ring-structured two-layer data.

    Methods: logistic baseline, trimmed-k-means generative, sample
    generative, robust generative (single deepest layer), and the
    weighted per-layer robust ensemble.
    """
    results: dict[float, dict[str, float]] = {}
    for delta in deltas:
        rng = np.random.default_rng(seed)
        means = _ring_means(rng, classes, dim, radius)
        means_by_layer = [means * weak_scale, means]
        ytr, xtr = bench_split(rng, means_by_layer, n_per_class, delta, classes)
        yva, xva = bench_split(rng, means_by_layer, max(1, n_val // classes), delta, classes)
        yte, xte = bench_split(rng, means_by_layer, n_test_per_class, 0.0, classes)
        uniform = np.full(classes, 1.0 / classes)

        fs_tr = FeatureSet(features=xtr[1], labels=ytr, num_classes=classes)
        lfs_tr = LayeredFeatureSet(
            [FeatureSet(features=x, labels=ytr, num_classes=classes) for x in xtr]
        )
        lfs_va = LayeredFeatureSet(
            [FeatureSet(features=x, labels=yva, num_classes=classes) for x in xva]
        )
        row: dict[str, float] = {}

        sp = fit_logistic_baseline(fs_tr, l2=1e-3)
        row["logistic"] = float(
            (np.argmax(xte[1] @ sp.weights.T + sp.biases, axis=1) == yte).mean()
        )

        stats, tied, _ = trimmed_kmeans(fs_tr, trim_fraction=0.5, iters=2)
        p = make_params(np.vstack([s.mean for s in stats]), tied, uniform)
        row["tkm"] = accuracy(predict(p, xte[1])[0], yte)

        stats, tied, _ = sample_estimate(fs_tr)
        p = make_params(np.vstack([s.mean for s in stats]), tied, uniform)
        row["sample"] = accuracy(predict(p, xte[1])[0], yte)

        cfg = McdConfig(restarts=restarts, max_iters=imax)
        fit, tied, priors = mcd_estimate(fs_tr, cfg, seed=seed)
        p = make_params(np.vstack([f.stats.mean for f in fit.class_fits]), tied, priors)
        row["robust_single"] = accuracy(predict(p, xte[1])[0], yte)

        model = build_rog(lfs_tr, lfs_va, cfg, keep=keep, seed=seed)
        row["robust_ensemble"] = float((predict_ensemble(model, xte)[0] == yte).mean())

        results[delta] = row
    return results


BENCH_METHODS = ["robust_ensemble", "robust_single", "sample", "tkm", "logistic"]


def cmd_bench(args) -> int:
    out = _out_dir(args)
    deltas = args.deltas
    results = bench_suite(
        deltas,
        seed=args.seed,
        n_per_class=args.n_per_class,
        restarts=args.restarts,
        imax=args.imax,
    )
    rows = []
    for delta in deltas:
        for method in BENCH_METHODS:
            rows.append(
                {
                    "split": "test",
                    "estimator": method,
                    "noise_kind": "flip",
                    "rate": delta,
                    "accuracy": f"{results[delta][method]:.6f}",
                    "nll": "",
                }
            )
    _write_metrics(out, rows)
    lines = [
        "# Benchmark: estimator accuracy vs label-noise rate",
        "",
        "| estimator | " + " | ".join(f"rate {d}" for d in deltas) + " |",
        "|---|" + "---|" * len(deltas),
    ]
    for method in BENCH_METHODS:
        lines.append(
            f"| {method} | "
            + " | ".join(f"{results[d][method]*100:.2f}" for d in deltas)
            + " |"
        )
    (out / "report.md").write_text("\n".join(lines) + "\n")
    _write_config(out, args)
    print("\n".join(lines))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rog",
        description="Robust generative classifiers over fixed feature sets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="rog-out")
        p.add_argument("--config", default=None, help="JSON file of defaults")

    p = sub.add_parser("synth", help="synthesize train/val/test feature sets")
    common(p)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--n-per-class", type=int, default=1000)
    p.add_argument("--n-val", type=int, default=1000)
    p.add_argument("--n-test", type=int, default=5000)
    p.add_argument("--delta-out", type=float, default=0.0)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--out-sigma2", type=float, default=4.0)
    p.add_argument("--mean-scale", type=float, default=4.0)
    p.add_argument("--noise", choices=["none", "uniform", "flip", "open-set"], default="none")
    p.add_argument("--rate", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit a classifier on one or more feature files")
    common(p)
    p.add_argument("--layer", action="append", required=True, help="training rogf/csv path")
    p.add_argument("--val-layer", action="append", default=None, help="validation rogf path")
    p.add_argument(
        "--estimator", choices=["sample", "mcd", "lts-euclid", "tkm"], default="mcd"
    )
    p.add_argument("--keep", type=int, default=None, help="validation rows kept for weights")
    p.add_argument("--keep-per-class", type=int, default=None, help="subset size override")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--imax", type=int, default=2)
    p.add_argument("--trim", type=float, default=0.5)
    p.add_argument("--exact", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="evaluate a saved model on feature files")
    common(p)
    p.add_argument("--model", required=True, help="model directory or ensemble.json")
    p.add_argument("--layer", action="append", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--estimator", default="mcd")
    p.add_argument("--noise", default="none")
    p.add_argument("--rate", type=float, default=0.0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("theory", help="numerical checks of the estimator limits")
    common(p)
    p.add_argument("--check", choices=["theorem1", "lemma1", "breakdown", "all"], default="all")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--mean-scale", type=float, default=4.0)
    p.add_argument("--delta-out", type=float, default=0.25)
    p.add_argument("--n-per-class", type=int, default=100_000)
    p.add_argument("--n-grid", type=int, nargs="+", default=None)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--imax", type=int, default=30)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("bench", help="estimator comparison on the synthetic suite")
    common(p)
    p.add_argument("--deltas", type=float, nargs="+", default=[0.0, 0.2, 0.4, 0.6])
    p.add_argument("--n-per-class", type=int, default=2000)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--imax", type=int, default=10)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # defaults of the invoked subcommand, for the config-file merge
    defaults: dict = {}
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub_action in action.choices[args.command]._actions:
                if sub_action.dest != "help":
                    defaults[sub_action.dest] = sub_action.default
        elif action.dest != "help":
            defaults.setdefault(action.dest, action.default)
    try:
        _apply_config_file(args, defaults)
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NUMERIC_ERRORS as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
