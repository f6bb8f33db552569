"""Command-line interface.

Subcommands: calibrate | accountant | train | generate | evaluate | gradcheck.
``train`` reads an INI-style config (sections [train], [privacy],
[discriminator], [generator], [data], [output]) and writes a checkpoint,
a metrics CSV (iteration, wasserstein_estimate, epsilon_spent), and a run
manifest. The output directory can be overridden with the DPWGAN_OUT_DIR
environment variable.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import bounds as _bounds
from . import evaluation as _eval
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import (
    KIND_BINARY,
    RecordMatrix,
    enforce_norm_bound,
    gen_correlated_binary,
    gen_gaussian_mixture,
    load_binary_csv,
    load_csv,
    save_csv,
)
from .network import NetworkSpec
from .privacy import MomentsLedger, calibrate_sigma
from .training import (
    TrainConfig,
    TrainState,
    current_epsilon,
    generate_samples,
    init_train_state,
    run_iterations,
)


class UsageError(SystemExit):
    def __init__(self, message: str):
        print(f"error: {message}", file=sys.stderr)
        super().__init__(2)


def _fmt(x: float) -> str:
    return f"{x:.6e}"


# ------------------------------------------------------------------ calibrate

def cmd_calibrate(args) -> int:
    try:
        sigma = calibrate_sigma(args.eps, args.delta, args.q, args.n_d)
    except ValueError as exc:
        raise UsageError(str(exc))
    print(f"sigma_n = {_fmt(sigma)}")
    print(f"per-inner-loop guarantee: ({_fmt(args.eps)}, {_fmt(args.delta)})-DP "
          f"over n_d = {args.n_d} noisy steps")
    print()
    print("cumulative ledger epsilon:")
    print("steps\tepsilon")
    for steps in (args.n_d, 10 * args.n_d, 100 * args.n_d):
        ledger = MomentsLedger(q=args.q, sigma_n=sigma, steps_taken=steps)
        print(f"{steps}\t{_fmt(ledger.get_epsilon(args.delta))}")
    return 0


def cmd_accountant(args) -> int:
    if (args.sigma_n is None) == (args.eps is None):
        raise UsageError("supply exactly one of --sigma-n and --eps")
    try:
        sigma = (
            args.sigma_n
            if args.sigma_n is not None
            else calibrate_sigma(args.eps, args.delta, args.q, args.n_d)
        )
        if args.eps is not None:
            print(f"calibrated sigma_n = {_fmt(sigma)}")
        steps = sorted({int(s) for s in args.steps.split(",") if s.strip()})
        print("steps\tepsilon")
        for s in steps:
            ledger = MomentsLedger(q=args.q, sigma_n=sigma, steps_taken=s)
            print(f"{s}\t{_fmt(ledger.get_epsilon(args.delta))}")
    except ValueError as exc:
        raise UsageError(str(exc))
    return 0


# ------------------------------------------------------------------ gradcheck

def cmd_gradcheck(args) -> int:
    widths = _parse_widths(args.widths)
    activations = tuple([args.activation] * (len(widths) - 2)) + (args.output_activation,)
    spec = NetworkSpec(tuple(widths), activations)
    check = _bounds.check_clip_precondition(spec, args.cp)
    if not check.passed:
        print(f"precondition: FAIL at hidden layer {check.layer} "
              f"(limit {_fmt(check.limit)}, c_p {_fmt(args.cp)})")
        return 1
    print(f"precondition: PASS (tightest limit {_fmt(check.limit)})")
    bounds = _bounds.ActivationBounds.for_spec(spec)
    eff = None
    if bounds.B_sigma is None:
        eff = _bounds.effective_output_bound(spec, args.cp, _bounds.DataBound(args.data_bound))
        print(f"effective output bound (interval propagation): {_fmt(eff)}")
    cg = _bounds.compute_cg(spec, args.cp, bounds, effective_B_sigma=eff)
    print(f"c_g = {_fmt(cg)}")
    if args.trials > 0:
        rng = np.random.default_rng(args.seed)
        observed = _bounds.empirical_grad_bound(
            spec, args.cp, args.trials, _bounds.DataBound(args.data_bound), rng
        )
        verdict = "PASS" if observed <= cg else "FAIL"
        print(f"empirical max over {args.trials} trials = {_fmt(observed)} -> {verdict}")
        if observed > cg:
            return 1
    return 0


def _parse_widths(text: str) -> list[int]:
    try:
        widths = [int(w) for w in text.replace(";", ",").split(",") if w.strip()]
    except ValueError:
        raise UsageError(f"cannot parse widths {text!r}")
    if len(widths) < 2:
        raise UsageError("need at least input and output widths")
    return widths


# ---------------------------------------------------------------------- train

def _require(cfg: configparser.ConfigParser, section: str, key: str) -> str:
    if not cfg.has_option(section, key):
        raise UsageError(f"config is missing [{section}] {key}")
    return cfg.get(section, key)


def _parse_centers(text: str) -> np.ndarray:
    rows = [r for r in text.split(";") if r.strip()]
    return np.array([[float(v) for v in r.split(",")] for r in rows])


def _parse_couplings(text: str):
    out = []
    for part in text.split(";"):
        if not part.strip():
            continue
        i, j, s = part.split(",")
        out.append((int(i), int(j), float(s)))
    return out


def load_run_config(path: str):
    """Parse a run config file into (TrainConfig builder inputs, specs, data,
    privacy block, output dir). Numeric validation happens in TrainConfig."""
    cfg = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = cfg.read(path)
    if not read:
        raise UsageError(f"cannot read config {path}")

    # data ------------------------------------------------------------------
    kind = _require(cfg, "data", "kind")
    norm_bound = cfg.getfloat("data", "norm_bound", fallback=None)
    if kind == "gaussian_mixture":
        records = gen_gaussian_mixture(
            n=cfg.getint("data", "n"),
            centers=_parse_centers(_require(cfg, "data", "centers")),
            std=cfg.getfloat("data", "std"),
            seed=cfg.getint("data", "data_seed", fallback=0),
        )
    elif kind == "correlated_binary":
        dims = cfg.getint("data", "dims")
        prob_rng = np.random.default_rng(cfg.getint("data", "probs_seed", fallback=0))
        base_probs = prob_rng.uniform(
            cfg.getfloat("data", "base_prob_low", fallback=0.05),
            cfg.getfloat("data", "base_prob_high", fallback=0.6),
            size=dims,
        )
        records = gen_correlated_binary(
            n=cfg.getint("data", "n"),
            dims=dims,
            base_probs=base_probs,
            pair_couplings=_parse_couplings(cfg.get("data", "couplings", fallback="")),
            seed=cfg.getint("data", "data_seed", fallback=0),
        )
    elif kind in ("csv", "binary_csv"):
        path_value = _require(cfg, "data", "path")
        if not Path(path_value).exists():
            raise UsageError(f"data path does not exist: {path_value}")
        header = cfg.getboolean("data", "header", fallback=False)
        if kind == "binary_csv":
            records = load_binary_csv(path_value, header=header)
        else:
            records = load_csv(path_value, header=header)
    else:
        raise UsageError(f"unknown data kind {kind!r}")
    if norm_bound is not None:
        records = enforce_norm_bound(records, norm_bound)

    # architectures ----------------------------------------------------------
    d = records.n_cols
    disc_hidden = _parse_widths("0," + _require(cfg, "discriminator", "hidden"))[1:]
    gen_hidden = _parse_widths("0," + _require(cfg, "generator", "hidden"))[1:]
    disc_act = cfg.get("discriminator", "hidden_activation", fallback="sigmoid")
    disc_out = cfg.get("discriminator", "output_activation", fallback="identity")
    gen_act = cfg.get("generator", "hidden_activation", fallback="tanh")
    latent_dim = cfg.getint("train", "latent_dim")
    disc_spec = NetworkSpec(
        (d, *disc_hidden, 1), tuple([disc_act] * len(disc_hidden)) + (disc_out,)
    )
    gen_spec = NetworkSpec(
        (latent_dim, *gen_hidden, d), tuple([gen_act] * len(gen_hidden)) + ("sigmoid",)
    )

    # privacy ----------------------------------------------------------------
    has_eps = cfg.has_option("privacy", "epsilon")
    has_sigma = cfg.has_option("privacy", "sigma_n")
    if has_eps == has_sigma:
        raise UsageError("set exactly one of [privacy] epsilon and [privacy] sigma_n")
    delta = cfg.getfloat("privacy", "delta", fallback=1e-5)
    m = cfg.getint("train", "m")
    n_d = cfg.getint("train", "n_d")
    q = m / records.n_rows
    if has_eps:
        target_eps = cfg.getfloat("privacy", "epsilon")
        sigma_n = calibrate_sigma(target_eps, delta, q, n_d)
    else:
        target_eps = None
        sigma_n = cfg.getfloat("privacy", "sigma_n")

    # gradient bound ---------------------------------------------------------
    c_p = cfg.getfloat("train", "c_p")
    cg_text = cfg.get("train", "c_g", fallback="auto")
    if cg_text.strip() == "auto":
        c_g = _bounds.compute_cg(disc_spec, c_p, include_biases=True)
    else:
        c_g = float(cg_text)

    eval_batch = cfg.getint("train", "eval_batch", fallback=0) or None
    gen_init = cfg.getfloat("train", "gen_init_scale", fallback=None)
    train_config = TrainConfig(
        alpha_d=cfg.getfloat("train", "alpha_d"),
        alpha_g=cfg.getfloat("train", "alpha_g"),
        c_p=c_p,
        m=m,
        M=records.n_rows,
        n_d=n_d,
        n_g=cfg.getint("train", "n_g"),
        sigma_n=sigma_n,
        c_g=c_g,
        latent_dim=latent_dim,
        seed=cfg.getint("train", "seed", fallback=0),
        gen_init_scale=gen_init,
        log_every=cfg.getint("train", "log_every", fallback=100),
        eval_batch=eval_batch,
        objective=cfg.get("train", "objective", fallback="wasserstein"),
        l2_reg=cfg.getfloat("train", "l2_reg", fallback=0.0),
    )
    out_dir = os.environ.get("DPWGAN_OUT_DIR") or cfg.get("output", "dir", fallback="out")
    privacy_block = {"target_epsilon": target_eps, "delta": delta, "sigma_n": sigma_n, "q": q}
    return train_config, disc_spec, gen_spec, records, privacy_block, out_dir


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "wasserstein_estimate", "epsilon_spent"])
        for r in rows:
            writer.writerow([r.generator_iteration, repr(r.wasserstein_estimate), repr(r.epsilon_spent)])


def cmd_train(args) -> int:
    config_path = Path(args.config)
    if not config_path.exists():
        raise UsageError(f"config not found: {config_path}")
    train_config, disc_spec, gen_spec, records, privacy, out_dir = load_run_config(
        str(config_path)
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config_hash = hashlib.sha256(config_path.read_bytes()).hexdigest()

    manifest = {
        "config_file": str(config_path),
        "config_sha256": config_hash,
        "seed": train_config.seed,
        "privacy": privacy,
        "versions": {
            "dpwgan": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "status": "running",
    }
    started = time.monotonic()
    try:
        if args.resume:
            state = load_checkpoint(args.resume)
            if (state.config.m, state.config.M) != (train_config.m, train_config.M):
                raise UsageError("resume config changes m or M; sampler state would be invalid")
            state.config = train_config
            remaining = train_config.n_g - state.iteration
            if remaining < 0:
                raise UsageError("checkpoint is already past the configured n_g")
            run_iterations(state, records, remaining, privacy["delta"])
        else:
            state = init_train_state(train_config, records, disc_spec, gen_spec)
            run_iterations(state, records, train_config.n_g, privacy["delta"])
    except Exception as exc:
        manifest["status"] = "aborted"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["wallclock_s"] = time.monotonic() - started
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        print(f"error: training aborted: {exc}", file=sys.stderr)
        return 1

    metrics_path = out / "metrics.csv"
    ckpt_path = out / "checkpoint.npz"
    write_metrics_csv(metrics_path, state.log.rows)
    save_checkpoint(ckpt_path, state)

    per_loop_eps = privacy["target_epsilon"]
    cumulative = current_epsilon(state, privacy["delta"])
    manifest.update(
        status="completed",
        wallclock_s=time.monotonic() - started,
        outputs={"metrics": metrics_path.name, "checkpoint": ckpt_path.name},
        per_inner_loop_epsilon=per_loop_eps,
        cumulative_epsilon=None if cumulative == float("inf") else cumulative,
        noisy_steps=state.ledger.steps_taken,
    )
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    eps_text = "inf" if cumulative == float("inf") else _fmt(cumulative)
    print(f"completed {state.iteration} generator iterations; "
          f"cumulative epsilon = {eps_text} (delta {privacy['delta']:g})")
    print(f"wrote {metrics_path}, {ckpt_path}, {out / 'manifest.json'}")
    return 0


# ------------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    try:
        state = load_checkpoint(args.checkpoint)
    except CheckpointError as exc:
        raise UsageError(str(exc))
    eps_before = current_epsilon(state, args.delta)
    rng = np.random.default_rng(args.seed)
    samples = generate_samples(state.gen_spec, state.gen, args.n, rng)
    kind = "continuous"
    if args.binarize_threshold is not None:
        samples = (samples >= args.binarize_threshold).astype(float)
        kind = KIND_BINARY
    records = RecordMatrix(samples.reshape(args.n, state.gen_spec.output_width), kind=kind)
    header = [f"x{j}" for j in range(records.n_cols)]
    save_csv(records, args.out, header=header)
    eps_after = current_epsilon(state, args.delta)
    assert eps_before == eps_after  # generation is post-processing
    print(f"wrote {args.n} samples to {args.out}; epsilon unchanged")
    return 0


# ------------------------------------------------------------------- evaluate

def _load_matrix(path: str, binary: bool) -> RecordMatrix:
    if not Path(path).exists():
        raise UsageError(f"matrix not found: {path}")
    mat = load_csv(path, header=True)
    if binary:
        return RecordMatrix(mat.data, kind=KIND_BINARY)
    return mat


VALID_METRICS = ("dwp", "dwpre", "nn", "downstream")


def cmd_evaluate(args) -> int:
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in metrics if m not in VALID_METRICS]
    if unknown:
        raise UsageError(
            f"unknown metric(s) {unknown}; valid names: {', '.join(VALID_METRICS)}"
        )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary: dict = {}

    needs_binary = bool({"dwp", "dwpre"} & set(metrics))
    real = _load_matrix(args.real, needs_binary)
    gen = _load_matrix(args.generated, needs_binary)
    if real.n_cols != gen.n_cols:
        raise UsageError(
            f"column mismatch: real has {real.n_cols}, generated has {gen.n_cols}"
        )

    if "dwp" in metrics:
        pairs = _eval.dwp(real, gen)
        _eval.write_dwp_csv(out / "dwp.csv", pairs)
        diffs = [abs(p.p_gen - p.p_real) for p in pairs]
        summary["dwp"] = {
            "mean_abs_diff": float(np.mean(diffs)),
            "correlation": float(
                np.corrcoef([p.p_real for p in pairs], [p.p_gen for p in pairs])[0, 1]
            ),
        }
    if "dwpre" in metrics:
        if not args.test:
            raise UsageError("dwpre needs --test")
        test = _load_matrix(args.test, True)
        if test.n_cols != real.n_cols:
            raise UsageError(
                f"column mismatch: test has {test.n_cols}, real has {real.n_cols}"
            )
        results = _eval.dwpre(real, gen, test)
        _eval.write_dwpre_csv(out / "dwpre.csv", results)
        kept = [r for r in results if r.skip_reason is None]
        summary["dwpre"] = {
            "n_skipped": len(results) - len(kept),
            "mean_auc_real": float(np.mean([r.auc_real for r in kept])) if kept else None,
            "mean_auc_gen": float(np.mean([r.auc_gen for r in kept])) if kept else None,
        }
    if "nn" in metrics:
        idx = _eval.nearest_neighbors(gen, real, k=args.k)
        _eval.write_nn_csv(out / "nearest_neighbors.csv", idx)
        d = np.linalg.norm(gen.data - real.data[idx[:, 0]], axis=1)
        summary["nn"] = {"mean_nearest_distance": float(d.mean())}
    if "downstream" in metrics:
        for flag in ("gen_b", "test_a", "test_b"):
            if getattr(args, flag) is None:
                raise UsageError("downstream needs --gen-b, --test-a and --test-b")
        gen_b = _load_matrix(args.gen_b, False)
        test_a = _load_matrix(args.test_a, False)
        test_b = _load_matrix(args.test_b, False)
        accs = _eval.downstream_classify(
            gen.data, gen_b.data, test_a.data, test_b.data,
            n_samples=args.n_samples, repeats=args.repeats, seed=args.seed,
        )
        _eval.write_accuracy_csv(out / "downstream.csv", accs)
        summary["downstream"] = {
            "mean_accuracy": float(np.mean(accs)),
            "std_accuracy": float(np.std(accs)),
        }
    _eval.write_summary_json(out / "summary.json", summary)
    print(f"wrote evaluation outputs to {out}")
    return 0


# ----------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpwgan",
        description="Differentially private Wasserstein GAN toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="noise scale for a target (eps, delta)")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--q", type=float, required=True, help="sampling ratio m/M")
    p.add_argument("--n-d", dest="n_d", type=int, required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("accountant", help="epsilon for a noise scale and step counts")
    p.add_argument("--sigma-n", dest="sigma_n", type=float)
    p.add_argument("--eps", type=float, help="calibrate sigma_n from this target")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--n-d", dest="n_d", type=int, default=1)
    p.add_argument("--steps", type=str, default="1,10,100")
    p.set_defaults(func=cmd_accountant)

    p = sub.add_parser("train", help="run training from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample records from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--binarize-threshold", dest="binarize_threshold", type=float)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="run metrics on real/generated matrices")
    p.add_argument("--real", required=True)
    p.add_argument("--generated", required=True)
    p.add_argument("--test")
    p.add_argument("--metrics", default="dwp")
    p.add_argument("--out-dir", dest="out_dir", default="eval_out")
    p.add_argument("--k", type=int, default=3, help="neighbors for nn")
    p.add_argument("--gen-b", dest="gen_b", help="second generated class (downstream)")
    p.add_argument("--test-a", dest="test_a")
    p.add_argument("--test-b", dest="test_b")
    p.add_argument("--n-samples", dest="n_samples", type=int, default=400)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="precondition, analytic bound, empirical max")
    p.add_argument("--widths", required=True, help="comma-separated layer widths")
    p.add_argument("--activation", default="sigmoid")
    p.add_argument("--output-activation", dest="output_activation", default=None)
    p.add_argument("--cp", type=float, required=True)
    p.add_argument("--trials", type=int, default=0)
    p.add_argument("--data-bound", dest="data_bound", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "output_activation", "") is None:
        args.output_activation = args.activation
    try:
        return args.func(args)
    except UsageError:
        raise
    except BrokenPipeError:
        return 1


if __name__ == "__main__":
    sys.exit(main())
