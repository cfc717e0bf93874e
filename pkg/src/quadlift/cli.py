"""Command-line pipeline: generate data, train a method, evaluate, export.

Outputs live under a run directory keyed by system/method/seed so that a
rerun with the same config is byte-identical (timestamps only appear in
manifests).  Exit codes: 2 invalid configuration, 3 missing dataset,
4 checkpoint/dataset mismatch.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import nets, qdyn
from .estimators import (METHODS, LinProjQOpInf, QuadEmbeds, QuadProjQOpInf,
                         make_estimator)
from .evaluation import EvalReport, compare_methods
from .odeint import IntegratorConfig
from .systems import TrajectoryDataset, generate_split

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ARTIFACT = 4

SYSTEMS = ("pendulum", "lv", "burgers")

# per-system training defaults (hyper-parameter table of the experiments)
DEFAULTS = {
    "pendulum": dict(latent_dim=3, hidden_width=8, learning_rate=3e-3,
                     batch_size=32, weight_decay=1e-5, epochs=4000,
                     lr_decay_every=1500, lambda_recon=1.0,
                     lambda_dz_from_dx=1.0, architecture="mlp"),
    "lv": dict(latent_dim=3, hidden_width=16, learning_rate=3e-3,
               batch_size=64, weight_decay=1e-5, epochs=4000,
               lr_decay_every=1500, lambda_recon=1.0,
               lambda_dz_from_dx=1.0, architecture="mlp"),
    "burgers": dict(latent_dim=4, learning_rate=5e-3, batch_size=64,
                    weight_decay=1e-5, epochs=400, lr_decay_every=150,
                    lambda_recon=10.0, lambda_dz_from_dx=1.0,
                    architecture="conv", normalize=True),
}

VALID_METHODS = {
    "pendulum": ("quad-embeds", "linear-embeds", "quad-opinf"),
    "lv": ("quad-embeds", "linear-embeds", "quad-opinf"),
    "burgers": ("quad-embeds", "linproj-qopinf", "quadproj-qopinf"),
}


class CliError(SystemExit):
    def __init__(self, message: str, code: int):
        print(f"error: {message}", file=sys.stderr)
        super().__init__(code)


def _data_dir(out: Path, system: str, seed: int) -> Path:
    return out / system / f"seed{seed}" / "data"


def _run_dir(out: Path, system: str, method: str, seed: int) -> Path:
    return out / system / f"seed{seed}" / method


def _file_checksum(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_config_file(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise CliError(f"config file {p} not found", EXIT_CONFIG)
    with open(p) as fh:
        cfg = yaml.safe_load(fh) or {}
    if not isinstance(cfg, dict):
        raise CliError("config file must hold a mapping", EXIT_CONFIG)
    return cfg


def _check_system(system: str):
    if system not in SYSTEMS:
        raise CliError(f"unknown system {system!r} "
                       f"(choose from {', '.join(SYSTEMS)})", EXIT_CONFIG)


def _check_method(system: str, method: str):
    if method not in METHODS:
        raise CliError(f"unknown method {method!r}", EXIT_CONFIG)
    if method not in VALID_METHODS[system]:
        raise CliError(f"method {method!r} is not defined for system "
                       f"{system!r}", EXIT_CONFIG)


# ---------------------------------------------------------------------------
# generate

def cmd_generate(args) -> int:
    _check_system(args.system)
    ddir = _data_dir(Path(args.out), args.system, args.seed)
    ddir.mkdir(parents=True, exist_ok=True)
    manifest = {"system": args.system, "seed": args.seed, "files": {}}
    for split in ("train", "test"):
        ds = generate_split(args.system, split, args.seed,
                            n_traj=getattr(args, f"n_{split}", None))
        path = ddir / f"{split}.npz"
        ds.save(path)
        manifest["files"][f"{split}.npz"] = {
            "checksum": ds.checksum(),
            "n_traj": ds.n_traj,
            "rows": len(ds.X),
        }
    with open(ddir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"wrote {ddir}/train.npz, test.npz, manifest.json")
    return 0


def _load_split(out: Path, system: str, seed: int, split: str
                ) -> TrajectoryDataset:
    path = _data_dir(out, system, seed) / f"{split}.npz"
    if not path.exists():
        raise CliError(f"dataset {path} missing; run `generate` first",
                       EXIT_DATA)
    return TrajectoryDataset.load(path)


# ---------------------------------------------------------------------------
# train

def _build_estimator(system: str, method: str, seed: int, overrides: dict):
    params = dict(DEFAULTS[system])
    cls = METHODS[method]
    if method in ("quad-opinf",):
        params = {}
    elif method in ("linproj-qopinf", "quadproj-qopinf"):
        params = {"r": params["latent_dim"]}
    else:
        params["seed"] = seed
    for key, value in overrides.items():
        if value is None:
            continue
        params[key] = value
    valid = cls().get_params().keys()
    unknown = set(params) - set(valid)
    if unknown:
        raise CliError(f"options {sorted(unknown)} not valid for {method}",
                       EXIT_CONFIG)
    return make_estimator(method, **params), params


def cmd_train(args) -> int:
    _check_system(args.system)
    _check_method(args.system, args.method)
    out = Path(args.out)
    file_cfg = _load_config_file(args.config).get("train", {})
    overrides = dict(file_cfg)
    for key in ("epochs", "learning_rate", "batch_size", "latent_dim",
                "hidden_width", "lr_decay_every"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    train_ds = _load_split(out, args.system, args.seed, "train")
    est, resolved = _build_estimator(args.system, args.method, args.seed,
                                     overrides)
    rdir = _run_dir(out, args.system, args.method, args.seed)
    rdir.mkdir(parents=True, exist_ok=True)
    if isinstance(est, QuadEmbeds):
        est.fit(train_ds.X, train_ds.Xdot, log_every=args.log_every)
    else:
        est.fit(train_ds.X, train_ds.Xdot)
    save_estimator(est, rdir)
    snapshot = {"system": args.system, "method": args.method,
                "seed": args.seed, "params": resolved,
                "train_checksum": train_ds.checksum()}
    with open(rdir / "config.json", "w") as fh:
        json.dump(snapshot, fh, indent=2)
    if hasattr(est, "history_"):
        est.history_.to_csv(rdir / "history.csv")
    print(f"trained {args.method} on {args.system}; artifacts in {rdir}")
    return 0


def save_estimator(est, rdir: Path):
    qdyn.save_model(rdir / "model.json", est.model_,
                    getattr(est, "stable_params_", None))
    if isinstance(est, QuadEmbeds):
        nets.save_params(est.autoencoder_, rdir / "autoencoder.json")
        with open(rdir / "scale.json", "w") as fh:
            scale = est.scale_
            if isinstance(scale, np.ndarray):
                scale = scale.tolist()
            json.dump({"scale": scale}, fh)
    elif isinstance(est, (LinProjQOpInf, QuadProjQOpInf)):
        arrays = {"V": est.basis_.V,
                  "singular_values": est.basis_.singular_values}
        if isinstance(est, QuadProjQOpInf):
            arrays["W"] = est.manifold_.W
        np.savez(rdir / "basis.npz", **arrays)


def load_estimator(method: str, rdir: Path):
    from . import baselines

    model_path = rdir / "model.json"
    if not model_path.exists():
        raise CliError(f"checkpoint {model_path} missing; run `train` first",
                       EXIT_ARTIFACT)
    model, stable_params = qdyn.load_model(model_path)
    est = make_estimator(method)
    est.model_ = model
    if method in ("quad-embeds", "linear-embeds"):
        est.autoencoder_ = nets.load_params(rdir / "autoencoder.json")
        est.stable_params_ = stable_params
        with open(rdir / "scale.json") as fh:
            scale = json.load(fh)["scale"]
            est.scale_ = (np.asarray(scale, dtype=np.float64)
                          if isinstance(scale, list) else scale)
    elif method in ("linproj-qopinf", "quadproj-qopinf"):
        with np.load(rdir / "basis.npz") as z:
            est.basis_ = baselines.PodBasis(
                V=z["V"], singular_values=z["singular_values"])
            if method == "quadproj-qopinf":
                est.manifold_ = baselines.QuadManifold(V=z["V"], W=z["W"])
    return est


# ---------------------------------------------------------------------------
# evaluate

def cmd_evaluate(args) -> int:
    _check_system(args.system)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        _check_method(args.system, m)
    out = Path(args.out)
    test_ds = _load_split(out, args.system, args.seed, "test")
    train_ds = _load_split(out, args.system, args.seed, "train")
    amplitude = float(np.max(np.abs(train_ds.X)))
    if args.n_test is not None and args.n_test < test_ds.n_traj:
        # evaluate a prefix of the test trajectories
        keep = args.n_test
        end = test_ds.offsets[keep]
        test_ds = TrajectoryDataset(
            X=test_ds.X[:end], Xdot=test_ds.Xdot[:end],
            times=test_ds.times[:end], offsets=test_ds.offsets[:keep + 1],
            meta=test_ds.meta)
    predictors = {}
    for m in methods:
        rdir = _run_dir(out, args.system, m, args.seed)
        est = load_estimator(m, rdir)
        if m == "quad-opinf" and est.model_.n != test_ds.state_dim:
            raise CliError(f"{m} checkpoint dim {est.model_.n} does not "
                           f"match dataset dim {test_ds.state_dim}",
                           EXIT_ARTIFACT)
        cfg = IntegratorConfig(rtol=args.rtol, atol=args.atol)
        predictors[m] = (lambda e: lambda x0, t: e.rollout(x0, t, cfg))(est)
    report = compare_methods(predictors, test_ds,
                             training_amplitude=amplitude)
    edir = _run_dir(out, args.system, "eval", args.seed)
    edir.mkdir(parents=True, exist_ok=True)
    report.to_csv(edir / "report.csv")
    _write_violin(report, edir / "violin.csv")
    _write_worst_trajectories(report, predictors, test_ds, edir,
                              primary=methods[0])
    print(f"evaluation written to {edir}")
    return 0


def _write_violin(report: EvalReport, path: Path):
    cols = report.violin_columns()
    methods = list(cols)
    depth = max((len(c["errors"]) for c in cols.values()), default=0)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(methods) + "\n")
        fh.write(",".join(str(cols[m]["unstable"]) for m in methods)
                 + "  # unstable counts\n")
        for i in range(depth):
            row = [str(cols[m]["errors"][i]) if i < len(cols[m]["errors"])
                   else "" for m in methods]
            fh.write(",".join(row) + "\n")


def _write_worst_trajectories(report, predictors, test_ds, edir, primary,
                              k: int = 4):
    worst = report.worst_ics(primary, k)
    for rank, ic in enumerate(worst):
        times, X_true, _ = test_ds.trajectory(ic)
        columns = {"t": times}
        for j in range(X_true.shape[1]):
            columns[f"true_x{j}"] = X_true[:, j]
        for tag, predict in predictors.items():
            res = predict(X_true[0], times)
            Xp = res.X
            for j in range(Xp.shape[1]):
                col = np.full(len(times), np.nan)
                col[:len(Xp)] = Xp[:, j]
                columns[f"{tag}_x{j}"] = col
        path = edir / f"worst{rank}_ic{ic}.csv"
        header = ",".join(columns)
        data = np.column_stack(list(columns.values()))
        np.savetxt(path, data, delimiter=",", header=header, comments="")


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(p):
    p.add_argument("--system", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs")
    p.add_argument("--config", default=None,
                   help="YAML config file; flags override its values")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="quadlift",
        description="learn lifted coordinates with quadratic dynamics")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate train/test datasets")
    _add_common(g)
    g.add_argument("--n-train", type=int, default=None, dest="n_train")
    g.add_argument("--n-test", type=int, default=None, dest="n_test")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train one method")
    _add_common(t)
    t.add_argument("--method", required=True)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--learning-rate", type=float, default=None,
                   dest="learning_rate")
    t.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    t.add_argument("--latent-dim", type=int, default=None, dest="latent_dim")
    t.add_argument("--hidden-width", type=int, default=None,
                   dest="hidden_width")
    t.add_argument("--lr-decay-every", type=int, default=None,
                   dest="lr_decay_every")
    t.add_argument("--log-every", type=int, default=0, dest="log_every")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="compare trained methods on the test split")
    _add_common(e)
    e.add_argument("--methods", required=True,
                   help="comma-separated method tags; first is the reference "
                        "for worst-case trajectory export")
    e.add_argument("--n-test", type=int, default=None, dest="n_test")
    e.add_argument("--rtol", type=float, default=1e-6)
    e.add_argument("--atol", type=float, default=1e-9)
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("all", help="generate, train every method, evaluate")
    _add_common(a)
    a.add_argument("--methods", default=None)
    a.add_argument("--epochs", type=int, default=None)
    a.add_argument("--n-test", type=int, default=None, dest="n_test")
    a.set_defaults(func=cmd_all)
    return ap


def cmd_all(args) -> int:
    _check_system(args.system)
    methods = (args.methods.split(",") if args.methods
               else list(VALID_METHODS[args.system]))
    ns = argparse.Namespace(**vars(args))
    cmd_generate(ns)
    for m in methods:
        tns = argparse.Namespace(**vars(args), method=m, learning_rate=None,
                                 batch_size=None, latent_dim=None,
                                 hidden_width=None, lr_decay_every=None,
                                 log_every=0)
        cmd_train(tns)
    ens = argparse.Namespace(**vars(args), methods_list=None, rtol=1e-6,
                             atol=1e-9)
    ens.methods = ",".join(methods)
    return cmd_evaluate(ens)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except FileNotFoundError as exc:
        raise CliError(str(exc), EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())
