"""End-to-end orchestration: chronological split, preprocessing, graph
learning, training, detection, evaluation, and the seven-scheme ablation
runner."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from tfad import config as cfgmod
from tfad import dataio, graphlearn, metrics, preprocess, scoring, train
from tfad.branches import EVAL, Model, ModelConfig
from tfad.dataio import KIND_NAMES, Dataset
from tfad.kernels import BACKEND

log = logging.getLogger(__name__)


def split_dataset(dataset: Dataset, train_fraction: float) -> tuple[Dataset, Dataset]:
    """Chronological split; the early part trains, the late part tests."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    cut = int(round(dataset.n_ticks * train_fraction))
    if cut < 2 or dataset.n_ticks - cut < 2:
        raise ValueError("split leaves an empty side")
    return dataset.slice_time(0, cut), dataset.slice_time(cut, dataset.n_ticks)


@dataclass
class PreparedData:
    train_windows: np.ndarray  # [num, N, W, M]
    test_windows: np.ndarray
    test_starts: list[int]
    test_values_norm: np.ndarray  # [N, M, T_test] normalized test series
    test_labels: np.ndarray
    test_kinds: np.ndarray | None
    mu: np.ndarray
    sigma: np.ndarray
    adjacency: np.ndarray
    graph_scores: np.ndarray


def _filter_values(values: np.ndarray, sigma: float | None) -> np.ndarray:
    if sigma is None:
        return values
    return preprocess.gaussian_lowpass(values, sigma)


def _windows_from_values(values: np.ndarray, pcfg: preprocess.PreprocessConfig) -> tuple[np.ndarray, list[int]]:
    """[N, M, T] -> ([num, N, W, M], starts); stride-phase decimation, when
    enabled, contributes each phase as extra samples."""
    if pcfg.decimation_k > 1:
        usable = (values.shape[-1] // pcfg.decimation_k) * pcfg.decimation_k
        phases = preprocess.decimate(values[..., :usable], pcfg.decimation_k)
    else:
        phases = [values]
    all_windows = []
    starts: list[int] = []
    for phase in phases:
        wins = preprocess.make_windows(phase, pcfg.window, pcfg.stride)
        all_windows.append(wins.transpose(0, 1, 3, 2))  # [num, N, W, M]
        starts = preprocess.window_starts(phase.shape[-1], pcfg.window, pcfg.stride)
    return np.concatenate(all_windows, axis=0), starts


def prepare(
    train_ds: Dataset,
    test_ds: Dataset,
    pcfg: preprocess.PreprocessConfig,
    gcfg: graphlearn.GraphConfig,
) -> PreparedData:
    """Filter, normalize with training statistics, window, and learn the
    graph from the training split only."""
    train_vals = _filter_values(train_ds.values, pcfg.gaussian_sigma)
    test_vals = _filter_values(test_ds.values, pcfg.gaussian_sigma)
    mu, sigma = preprocess.channel_stats(train_vals)
    train_norm = preprocess.apply_stats(train_vals, mu, sigma, pcfg.constant_channel)
    test_norm = preprocess.apply_stats(test_vals, mu, sigma, pcfg.constant_channel)
    graph_scores, adjacency = graphlearn.learn_adjacency(train_norm, gcfg)
    train_windows, _ = _windows_from_values(train_norm, pcfg)
    test_windows, test_starts = _windows_from_values(test_norm, pcfg)
    return PreparedData(
        train_windows=train_windows,
        test_windows=test_windows,
        test_starts=test_starts,
        test_values_norm=test_norm,
        test_labels=(
            test_ds.labels
            if test_ds.labels is not None
            else np.zeros(test_ds.values.shape, dtype=np.uint8)
        ),
        test_kinds=test_ds.kinds,
        mu=mu,
        sigma=sigma,
        adjacency=adjacency,
        graph_scores=graph_scores,
    )


def detect(
    model: Model,
    windows: np.ndarray,
    starts: list[int],
    total_ticks: int,
    adjacency: np.ndarray,
    tau: float,
    batch_size: int = 8,
) -> tuple[scoring.ScoreTrace, np.ndarray]:
    """Score every window in evaluation mode and combine overlaps by max."""
    maps = train._forward_scores(model, windows, adjacency, batch_size)
    trace_scores, covered = scoring.aggregate_windows(maps, starts, total_ticks)
    return scoring.ScoreTrace.from_scores(trace_scores, tau), covered


def make_model(run_cfg: cfgmod.RunConfig, n_modalities: int) -> Model:
    model_cfg = dataclasses.replace(
        run_cfg.model,
        n_modalities=n_modalities,
        window=run_cfg.preprocess.window,
    )
    return Model(model_cfg, seed=run_cfg.seed)


@dataclass
class RunArtifacts:
    model: Model
    prepared: PreparedData
    train_result: train.TrainResult
    trace: scoring.ScoreTrace
    covered: np.ndarray
    report: dict


def run_pipeline(
    run_cfg: cfgmod.RunConfig,
    dataset: Dataset | None = None,
    checkpoint_dir=None,
) -> RunArtifacts:
    """Train on the clean chronological head, inject anomalies into the
    tail, detect, and report metrics plus the z-score baseline."""
    if dataset is None:
        d = run_cfg.data
        dataset = dataio.synth_generate(
            d.n_nodes, d.n_modalities, d.n_ticks, seed=run_cfg.seed, noise_std=d.noise_std
        )
    train_ds, test_ds = split_dataset(dataset, run_cfg.data.train_fraction)
    if run_cfg.inject is not None and (test_ds.labels is None or test_ds.labels.sum() == 0):
        spec = dataclasses.replace(run_cfg.inject, seed=run_cfg.seed)
        test_ds = dataio.inject(test_ds, spec)
    prepared = prepare(train_ds, test_ds, run_cfg.preprocess, run_cfg.graph)

    model = make_model(run_cfg, dataset.n_modalities)
    tcfg = dataclasses.replace(run_cfg.train, seed=run_cfg.seed)
    result = train.train_loop(
        model,
        prepared.train_windows,
        prepared.adjacency,
        tcfg,
        threshold_method=run_cfg.scoring.threshold_method,
        threshold_param=run_cfg.scoring.threshold_param,
        checkpoint_dir=checkpoint_dir,
    )
    trace, covered = detect(
        model,
        prepared.test_windows,
        prepared.test_starts,
        test_ds.n_ticks,
        prepared.adjacency,
        result.tau,
        batch_size=run_cfg.train.batch_size,
    )
    truth = prepared.test_labels[:, :, covered]
    pred = trace.labels[:, :, covered]
    kinds = None if prepared.test_kinds is None else prepared.test_kinds[:, :, covered]
    report_metrics = metrics.evaluate(pred, truth, kinds, KIND_NAMES)

    baseline_scores = metrics.zscore_baseline_scores(
        test_ds.values, *preprocess.channel_stats(train_ds.values)
    )[:, :, covered]
    baseline_f1, baseline_tau = metrics.best_f1(baseline_scores, truth)

    report = {
        "scheme": run_cfg.model.scheme,
        "config_digest": cfgmod.digest(run_cfg),
        "wkv_backend": BACKEND,
        **report_metrics.to_dict(),
        "baseline": {"best_f1": baseline_f1, "best_threshold": baseline_tau},
        "threshold": result.tau,
        "alphas": [float(a) for a in result.alphas],
        "loss_first_epoch": result.history[0].mean_loss,
        "loss_last_epoch": result.history[-1].mean_loss,
        "losses_last": {
            "l1": result.history[-1].l1,
            "l2": result.history[-1].l2,
            "l3": result.history[-1].l3,
        },
        "trainable_parameters": model.describe()["trainable_parameters"],
    }
    return RunArtifacts(
        model=model,
        prepared=prepared,
        train_result=result,
        trace=trace,
        covered=covered,
        report=report,
    )


def run_scheme(
    scheme: int,
    run_cfg: cfgmod.RunConfig,
    dataset: Dataset | None = None,
) -> RunArtifacts:
    """Apply one ablation scheme's switches and run the full pipeline."""
    return run_pipeline(cfgmod.apply_scheme(run_cfg, scheme), dataset=dataset)
