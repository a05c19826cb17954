"""Command-line front end.

Exit codes: 0 success, 1 a verification assertion failed, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .datasets import DatasetFile, MotionSpec, gen_bouncing_blobs, gen_moving_digits, read_dataset, write_dataset
from .errors import CheckpointError, ConfigurationError, DimensionError, FormatError, GroupingError
from .evaluation import bound_diagnostics, bound_inputs_from_model, emit_report, evaluate_forecast, render_frames
from .experiment import ExperimentConfig, load_config
from .learning import Adam, TrainingLog, read_checkpoint, restore, save_checkpoint, train_epoch
from .observer import ObserverModel
from .verify import MICRO_CONFIG, composed_gradcheck, decay_suite, op_gradchecks

log = logging.getLogger("stobserver")

EXIT_OK, EXIT_ASSERT, EXIT_USAGE = 0, 1, 2
USAGE_ERRORS = (ConfigurationError, GroupingError, DimensionError, FormatError, CheckpointError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _hw(text: str) -> tuple[int, int]:
    parts = text.lower().replace("x", ",").split(",")
    try:
        vals = [int(p) for p in parts if p]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad size {text!r}") from exc
    if len(vals) == 1:
        vals *= 2
    if len(vals) != 2 or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"bad size {text!r}; use H or HxW")
    return vals[0], vals[1]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stobserver", description="Spatiotemporal observer forecasting toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic dataset file")
    g.add_argument("--kind", choices=("digits", "blobs"), required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--t", type=int, required=True)
    g.add_argument("--hw", type=_hw, default=(64, 64))
    g.add_argument("--channels", type=int, default=1, help="blobs only")
    g.add_argument("--objects", type=int, default=2)
    g.add_argument("--sprite", type=int, default=12)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train a model and log per-epoch losses")
    t.add_argument("--config", required=True, help="JSON file or preset name")
    t.add_argument("--data", required=True, help="training dataset file")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--epochs", type=int, help="override the configured epoch count")
    t.add_argument("--limit", type=int, help="use only the first N training sequences")
    t.add_argument("--log", help="CSV log path (default: <out>.csv)")
    t.add_argument("--resume", help="continue from this checkpoint")

    pr = sub.add_parser("predict", help="forecast from a checkpoint")
    pr.add_argument("--ckpt", required=True)
    pr.add_argument("--input", required=True, help="dataset file; its first t_in frames are observed")
    pr.add_argument("--horizon", type=int)
    pr.add_argument("--out", help="write predictions as a dataset file")
    pr.add_argument("--frames", help="directory for PGM dumps of the first sequence")

    e = sub.add_parser("evaluate", help="metrics report for a checkpoint on a dataset")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True, help="report path stem (.json and .csv are written)")
    e.add_argument("--thresholds", type=float, nargs="*", default=[], help="dBZ thresholds for HSS/CSI")
    e.add_argument("--bound", action="store_true", help="include bound diagnostics")

    gc = sub.add_parser("gradcheck", help="finite-difference check of every op and the full loss")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--coords", type=int, default=6, help="probed coordinates per parameter tensor")
    gc.add_argument("--tol", type=float, default=1e-5)

    c = sub.add_parser("convergence", help="latent error decay against the geometric envelope")
    c.add_argument("--config", help="JSON file or preset (default: micro config)")
    c.add_argument("--models", type=int, default=20)
    c.add_argument("--steps", type=int, default=50)

    b = sub.add_parser("bound", help="generalization-bound diagnostics for a checkpoint")
    b.add_argument("--ckpt", required=True)
    b.add_argument("--data", required=True, help="training inputs used for ||X||_F and n")
    b.add_argument("--eta", type=float, default=1.0)
    b.add_argument("--M", type=float, default=1.0)
    b.add_argument("--delta", type=float, default=0.05)
    return p


# -- helpers ----------------------------------------------------------------
def _load_model(ckpt_path: str) -> tuple[ObserverModel, ExperimentConfig]:
    ckpt = read_checkpoint(ckpt_path)
    cfg = ExperimentConfig.from_dict(ckpt.config)
    model = ObserverModel(cfg.model, seed=cfg.seed)
    restore(ckpt, model, cfg.to_dict())
    return model, cfg


def _check_sequences(ds: DatasetFile, cfg: ExperimentConfig, need: int) -> None:
    m = cfg.model
    want = (m.channels, m.height, m.width)
    if ds.shape[2:] != want:
        raise DimensionError(f"dataset frames are {ds.shape[2:]}, the model expects {want}")
    if ds.shape[1] < need:
        raise DimensionError(f"dataset sequences have {ds.shape[1]} frames, need {need}")


# -- subcommands --------------------------------------------------------------
def cmd_generate(a) -> int:
    spec = MotionSpec(n_objects=a.objects, sprite_size=a.sprite, seed=a.seed)
    h, w = a.hw
    if a.kind == "digits":
        ds = gen_moving_digits(spec, a.n, a.t, h, w)
    else:
        ds = gen_bouncing_blobs(spec, a.n, a.t, h, w, channels=a.channels)
    write_dataset(a.out, ds)
    print(f"wrote {a.out}: {ds.shape}")
    return EXIT_OK


def cmd_train(a) -> int:
    cfg = load_config(a.config)
    ds = read_dataset(a.data)
    _check_sequences(ds, cfg, cfg.model.t_in + cfg.model.t_out)
    data = ds.data[: a.limit] if a.limit else ds.data
    model = ObserverModel(cfg.model, seed=cfg.seed)
    o = cfg.optimizer
    opt = Adam(model.named_parameters(), lr=o.lr, beta1=o.beta1, beta2=o.beta2, eps=o.eps)
    rng = np.random.default_rng(cfg.seed)
    start = 0
    if a.resume:
        start = restore(read_checkpoint(a.resume), model, cfg.to_dict(), opt, rng)
    epochs = cfg.training.epochs if a.epochs is None else a.epochs
    csv_log = TrainingLog(a.log or Path(a.out).with_suffix(".csv"))
    for epoch in range(start, start + epochs):
        stats = train_epoch(model, data, cfg.loss, opt, cfg.training.batch_size, rng, epoch + 1)
        csv_log.append(stats)
        print(f"epoch {stats.epoch}: total={stats.total:.6g} L_y={stats.L_y:.6g} ({stats.seconds:.1f}s)")
        save_checkpoint(a.out, model, cfg.to_dict(), opt, epoch + 1, rng)
    if epochs == 0:
        save_checkpoint(a.out, model, cfg.to_dict(), opt, start, rng)
    return EXIT_OK


def cmd_predict(a) -> int:
    model, cfg = _load_model(a.ckpt)
    m = cfg.model
    horizon = m.t_out if a.horizon is None else a.horizon
    if horizon < m.delta or horizon % m.delta:
        raise UsageError(f"horizon {horizon} must be a positive multiple of delta={m.delta}")
    ds = read_dataset(a.input)
    _check_sequences(ds, cfg, m.t_in)
    pred = model.predict(ds.data[:, : m.t_in], horizon)
    if a.out:
        write_dataset(a.out, DatasetFile(np.clip(pred, 0, 1).astype(np.float32), normalized=True))
    if a.frames:
        truth = ds.data[0, m.t_in: m.t_in + horizon]
        render_frames(pred[0], a.frames, truth if len(truth) == horizon else None)
    print(f"predicted {pred.shape}")
    return EXIT_OK


def cmd_evaluate(a) -> int:
    model, cfg = _load_model(a.ckpt)
    m = cfg.model
    ds = read_dataset(a.data)
    _check_sequences(ds, cfg, m.t_in + m.t_out)
    preds = []
    for i in range(0, len(ds), max(1, cfg.training.batch_size)):
        preds.append(model.predict(ds.data[i:i + cfg.training.batch_size, : m.t_in]))
    pred = np.clip(np.concatenate(preds), 0, 1)
    truth = ds.data[:, m.t_in: m.t_in + m.t_out]
    report = evaluate_forecast(pred, truth, a.thresholds, config=cfg.to_dict(), last_observed=ds.data[:, m.t_in - 1])
    if a.bound:
        x = ds.data[:, : m.t_in]
        inputs = bound_inputs_from_model(model, float(np.linalg.norm(x)), len(ds))
        report.bound = bound_diagnostics(inputs)
    jpath, cpath = emit_report(report, a.out)
    print(json.dumps(report.aggregate))
    print(f"wrote {jpath} and {cpath}")
    return EXIT_OK


def cmd_gradcheck(a) -> int:
    errs = op_gradchecks(a.seed)
    errs["composed_loss"] = composed_gradcheck(a.seed, a.coords, MICRO_CONFIG)
    ok = True
    for name, err in errs.items():
        status = "ok" if err < a.tol else "FAIL"
        ok &= err < a.tol
        print(f"{name:24s} {err:.3e} {status}")
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_convergence(a) -> int:
    model_cfg = load_config(a.config).model if a.config else MICRO_CONFIG
    results = decay_suite(model_cfg, a.models, a.steps)
    ok = all(r.holds for r in results)
    for r in results:
        ratio = np.max(r.errors / np.maximum(r.envelope, np.finfo(float).tiny))
        print(f"model {r.seed:3d}: max e_k/envelope = {ratio:.6f} {'ok' if r.holds else 'VIOLATED'}")
    print(f"envelope holds for {sum(r.holds for r in results)}/{len(results)} models")
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_bound(a) -> int:
    model, cfg = _load_model(a.ckpt)
    ds = read_dataset(a.data)
    _check_sequences(ds, cfg, cfg.model.t_in)
    x = ds.data[:, : cfg.model.t_in]
    inputs = bound_inputs_from_model(model, float(np.linalg.norm(x)), len(ds), a.eta, a.M, a.delta)
    diag = bound_diagnostics(inputs)
    print(json.dumps(diag, indent=2))
    return EXIT_OK if all(np.isfinite(v) for v in diag.values()) else EXIT_ASSERT


COMMANDS = {
    "generate": cmd_generate, "train": cmd_train, "predict": cmd_predict, "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck, "convergence": cmd_convergence, "bound": cmd_bound,
}


def _thread_limit():
    value = os.environ.get("STOB_THREADS")
    if not value:
        return None
    from threadpoolctl import threadpool_limits

    try:
        n = int(value)
    except ValueError as exc:
        raise UsageError(f"STOB_THREADS must be an integer, got {value!r}") from exc
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        limiter = _thread_limit()
        try:
            return COMMANDS[args.command](args)
        finally:
            if limiter is not None:
                limiter.unregister()
    except UsageError as exc:
        print(f"stobserver {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except USAGE_ERRORS as exc:
        print(f"stobserver {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
