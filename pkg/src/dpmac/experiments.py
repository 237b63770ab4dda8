"""Experiment orchestration: config -> data -> training -> artifacts.

Artifacts land in the configured output directory:

* ``metrics.csv``: fixed-header per-epoch evaluation log (byte-identical for
  identical seeds);
* ``privacy.json``: the final accounting statement, self-contained enough to
  recompute epsilon offline (sampling rate, sigma, steps, delta and the
  optional preprocessing release);
* ``weights.npz``: the trained weight matrices, ``layer_0 .. layer_K``.

All files are written to a temporary name and renamed into place.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from . import coordinates, data, network, pca
from .accountant import MomentsLedger
from .config import ConfigError, ExperimentConfig
from .mac import MacConfig, train_dp_mac
from .mechanism import PrivacyParams
from .sgd import SgdConfig, train_dp_sgd


def _load_idx_autoencoder(cfg: ExperimentConfig) -> tuple:
    imgs = data.load_idx(cfg.train_inputs)
    flat = imgs.reshape(imgs.shape[0], -1).astype(float) / 255.0
    projected = network.project_rows(flat, cfg.norm_bound)
    train = network.Dataset(projected, projected.copy(), cfg.norm_bound)
    test = None
    if cfg.test_inputs:
        imgs = data.load_idx(cfg.test_inputs)
        flat = imgs.reshape(imgs.shape[0], -1).astype(float) / 255.0
        projected = network.project_rows(flat, cfg.norm_bound)
        test = network.Dataset(projected, projected.copy(), cfg.norm_bound)
    return train, test


def build_datasets(cfg: ExperimentConfig) -> tuple:
    """(train, test-or-None) per the config's data section."""
    if cfg.data_format == "synthetic":
        data_rng = np.random.default_rng([cfg.seed, 0])
        if cfg.task == "classifier":
            classes = cfg.n_classes or 4
            train, test = data.synthetic_classification_split(
                cfg.synth_train, cfg.synth_test, cfg.synth_dim, classes,
                data_rng, norm_bound=cfg.norm_bound)
        else:
            train, test = data.synthetic_reconstruction_split(
                cfg.synth_train, cfg.synth_test, cfg.synth_dim,
                cfg.synth_latent, data_rng, norm_bound=cfg.norm_bound)
        return train, test

    if cfg.data_format == "idx":
        if cfg.task == "classifier":
            train = data.load_idx_classification(
                cfg.train_inputs, cfg.train_targets, cfg.norm_bound,
                cfg.n_classes)
            test = None
            if cfg.test_inputs:
                test = data.load_idx_classification(
                    cfg.test_inputs, cfg.test_targets, cfg.norm_bound,
                    cfg.n_classes)
            return train, test
        return _load_idx_autoencoder(cfg)

    task = "xent" if cfg.task == "classifier" else "mse"
    train = data.load_csv_dataset(cfg.train_inputs, cfg.train_targets,
                                  cfg.norm_bound, task, cfg.n_classes)
    test = None
    if cfg.test_inputs:
        test = data.load_csv_dataset(cfg.test_inputs, cfg.test_targets,
                                     cfg.norm_bound, task, cfg.n_classes)
    return train, test


def _apply_dp_pca(cfg: ExperimentConfig, train, test, ledger: MomentsLedger):
    """Replace inputs by their noisy principal projection; log the release."""
    proj_rng = np.random.default_rng([cfg.seed, 2])
    components = pca.dp_pca(train.inputs / cfg.norm_bound, cfg.pca_dim,
                            cfg.pca_sigma, proj_rng)
    if cfg.pca_sigma > 0:
        ledger.record(1.0, cfg.pca_sigma, 1)

    def _project(ds):
        new_inputs = ds.inputs @ components
        targets = new_inputs.copy() if cfg.task == "autoencoder" else ds.targets
        return network.Dataset(new_inputs, targets, cfg.norm_bound)

    return _project(train), None if test is None else _project(test), components


def _atomic(path: Path, write_fn) -> None:
    tmp = path.with_name(path.name + ".tmp")
    write_fn(tmp)
    os.replace(tmp, path)


def run_experiment(cfg: ExperimentConfig):
    """Execute one configured run; returns the privacy report and metrics."""
    cfg.validate()
    train, test = build_datasets(cfg)
    ledger = MomentsLedger()
    components = None
    if cfg.pca_dim is not None:
        train, test, components = _apply_dp_pca(cfg, train, test, ledger)

    in_dim = train.inputs.shape[1]
    task = coordinates.XENT if cfg.task == "classifier" else coordinates.MSE
    train_rng = np.random.default_rng([cfg.seed, 1])

    if cfg.algorithm == "mac":
        mac_cfg = MacConfig(
            hidden_units=cfg.hidden_units, task=task,
            hidden_act=cfg.hidden_act, output_act=cfg.output_act,
            taylor_order=cfg.taylor_order, mu=cfg.mu,
            coord_bound=cfg.norm_bound, epochs=cfg.epochs,
            batch_size=cfg.batch_size, z_steps=cfg.z_steps,
            w_steps=cfg.w_steps, z_lr=cfg.z_lr, w_lr=cfg.w_lr,
            w_lr_decay=cfg.w_lr_decay, z_optimizer=cfg.z_optimizer,
            w_optimizer=cfg.w_optimizer,
            sensitivity_mode=cfg.sensitivity_mode, grad_clip=cfg.grad_clip,
            hess_clip=cfg.hess_clip, persist_coords=cfg.persist_coords,
            init_scale=cfg.init_scale,
        )
        privacy = PrivacyParams(sigma=cfg.sigma, delta=cfg.delta)
        weights, report, metrics = train_dp_mac(
            train, mac_cfg, privacy, seed=train_rng, test=test, ledger=ledger)
    else:
        sgd_cfg = SgdConfig(
            hidden_units=cfg.hidden_units, task=task,
            hidden_act=cfg.hidden_act, output_act=cfg.output_act,
            epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr,
            lr_decay=cfg.lr_decay, lr_halving_epochs=cfg.lr_halving_epochs,
            clip_bound=cfg.clip_bound, sigma=cfg.sigma, delta=cfg.delta,
            optimizer=cfg.optimizer, init_scale=cfg.init_scale,
        )
        weights, report, metrics = train_dp_sgd(
            train, sgd_cfg, seed=train_rng, test=test, ledger=ledger)

    if cfg.pca_dim is not None and cfg.pca_sigma > 0:
        report.pca_sigma = cfg.pca_sigma

    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    _atomic(outdir / "metrics.csv", metrics.to_csv)
    _atomic(outdir / "privacy.json", report.to_json)

    def _write_weights(tmp_path):
        arrays = {f"layer_{k}": w for k, w in enumerate(weights.layers)}
        if components is not None:
            arrays["pca_components"] = components
        with open(tmp_path, "wb") as fh:
            np.savez(fh, **arrays)

    _atomic(outdir / "weights.npz", _write_weights)
    return report, metrics


def emit_curves(metric_paths, output_path) -> None:
    """Merge several metrics files into aligned mean/std columns.

    All inputs must share the same (epoch, step) grid; the sample standard
    deviation (ddof=1) is reported, 0 for a single run.  Cells empty in any
    run stay empty in the aggregate.
    """
    import csv as _csv

    if not metric_paths:
        raise ConfigError("emit-curves needs at least one input file")
    tables = []
    for path in metric_paths:
        with open(path, newline="") as fh:
            rows = list(_csv.reader(fh))
        if not rows or rows[0][:2] != ["epoch", "step"]:
            raise data.DataError(f"{path}: not a metrics file")
        tables.append(rows)
    header = tables[0][0]
    grid = [row[:2] for row in tables[0][1:]]
    for path, rows in zip(metric_paths, tables):
        if rows[0] != header:
            raise data.DataError(f"{path}: header mismatch")
        if [row[:2] for row in rows[1:]] != grid:
            raise data.DataError(f"{path}: iteration grid mismatch")

    value_cols = header[2:]
    out_header = ["epoch", "step"]
    for col in value_cols:
        out_header += [f"mean_{col}", f"std_{col}"]
    out_rows = []
    for i, (epoch, step) in enumerate(grid):
        row = [epoch, step]
        for j in range(len(value_cols)):
            cells = [t[1 + i][2 + j] for t in tables]
            if any(c == "" for c in cells):
                row += ["", ""]
                continue
            vals = np.array([float(c) for c in cells])
            mean = float(np.mean(vals))
            std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            row += [repr(mean), repr(std)]
        out_rows.append(row)

    def _write(tmp_path):
        with open(tmp_path, "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(out_header)
            writer.writerows(out_rows)

    _atomic(Path(output_path), _write)
