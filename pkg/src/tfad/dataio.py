"""Dataset model, CSV ingestion, seeded synthetic generation, and
injection of the four anomaly classes (point, context, collective,
correlation)."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

KIND_CODES = {"point": 1, "context": 2, "collective": 3, "correlation": 4}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}

IBRL_MODALITIES = ["temperature", "humidity", "light", "voltage"]
IBRL_TICK_SECONDS = 31.0
LONG_TICK_SECONDS = 30.0


@dataclass
class Dataset:
    node_ids: list[str]
    modality_names: list[str]
    timestamps: np.ndarray  # [T], strictly increasing
    values: np.ndarray  # [N, M, T]
    labels: np.ndarray | None = None  # [N, M, T] in {0, 1}
    kinds: np.ndarray | None = None  # [N, M, T] anomaly kind codes

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        n, m, t = self.values.shape
        if len(self.node_ids) != n or len(self.modality_names) != m:
            raise ValueError("node/modality name counts do not match values")
        if self.timestamps.shape != (t,):
            raise ValueError("timestamps length does not match values")
        if t > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if not np.isfinite(self.values).all():
            raise ValueError("values must be finite")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.uint8)
            if self.labels.shape != self.values.shape:
                raise ValueError("labels shape mismatch")
            if not np.isin(self.labels, (0, 1)).all():
                raise ValueError("labels must be 0/1")

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def n_modalities(self) -> int:
        return self.values.shape[1]

    @property
    def n_ticks(self) -> int:
        return self.values.shape[2]

    def slice_time(self, start: int, stop: int) -> "Dataset":
        return Dataset(
            node_ids=self.node_ids,
            modality_names=self.modality_names,
            timestamps=self.timestamps[start:stop].copy(),
            values=self.values[:, :, start:stop].copy(),
            labels=None if self.labels is None else self.labels[:, :, start:stop].copy(),
            kinds=None if self.kinds is None else self.kinds[:, :, start:stop].copy(),
        )


@dataclass
class InjectionSpec:
    kind: str  # point, context, collective, correlation
    magnitude: float = 3.0
    rate: float | None = 0.01  # fraction of ticks to label per channel
    segments: list[tuple[int, int]] | None = None  # half-open [start, stop)
    targets: list[tuple[int, int]] | None = None  # (node, modality); None = all
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown anomaly kind {self.kind!r}")
        if self.rate is not None and not 0.0 < self.rate < 1.0:
            raise ValueError("rate must lie in (0, 1)")
        if self.segments is None and self.rate is None:
            raise ValueError("need a rate or explicit segments")


def synth_generate(
    n_nodes: int,
    n_modalities: int,
    n_ticks: int,
    seed: int,
    noise_std: float = 0.05,
    tick_seconds: float = LONG_TICK_SECONDS,
) -> Dataset:
    """Correlated synthetic sensor data.

    Every modality has a shared latent built from 2-3 seeded sinusoids with
    long periods; each node observes its own scaled copy plus Gaussian
    noise, which guarantees the cross-node and cross-modal correlation
    structure the detector exploits. Labels start all zero.
    """
    if n_nodes < 2 or n_modalities < 2 or n_ticks < 2:
        raise ValueError("need at least 2 nodes, 2 modalities, 2 ticks")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5E5E]))
    t = np.arange(n_ticks, dtype=np.float64)
    values = np.empty((n_nodes, n_modalities, n_ticks))
    base_phase = rng.uniform(0, 2 * np.pi)  # couples the modalities
    for m in range(n_modalities):
        n_comp = int(rng.integers(2, 4))
        latent = np.zeros(n_ticks)
        for _ in range(n_comp):
            period = rng.uniform(80.0, 1000.0)
            amp = rng.uniform(0.5, 1.0)
            phase = base_phase + rng.uniform(-0.8, 0.8)
            latent += amp * np.sin(2 * np.pi * t / period + phase)
        latent -= latent.mean()
        gains = rng.uniform(0.7, 1.3, size=n_nodes)
        noise = rng.normal(0.0, noise_std, size=(n_nodes, n_ticks))
        values[:, m, :] = gains[:, None] * latent[None, :] + noise
    return Dataset(
        node_ids=[f"node{i}" for i in range(n_nodes)],
        modality_names=[f"modality{j}" for j in range(n_modalities)],
        timestamps=t * tick_seconds,
        values=values,
        labels=np.zeros((n_nodes, n_modalities, n_ticks), dtype=np.uint8),
        kinds=np.zeros((n_nodes, n_modalities, n_ticks), dtype=np.int8),
    )


def _pick_isolated_ticks(rng: np.random.Generator, total: int, count: int) -> np.ndarray:
    """Exactly ``count`` ticks, greedily kept non-adjacent when possible."""
    order = rng.permutation(total)
    chosen: list[int] = []
    taken = np.zeros(total, dtype=bool)
    for tick in order:
        if len(chosen) == count:
            break
        lo, hi = max(tick - 1, 0), min(tick + 2, total)
        if not taken[lo:hi].any():
            chosen.append(int(tick))
            taken[tick] = True
    for tick in order:  # relax isolation if the rate is too dense
        if len(chosen) == count:
            break
        if not taken[tick]:
            chosen.append(int(tick))
            taken[tick] = True
    return np.sort(np.array(chosen, dtype=np.int64))


def _segments_for(spec: InjectionSpec, rng: np.random.Generator, total: int) -> list[tuple[int, int]]:
    if spec.segments is not None:
        for start, stop in spec.segments:
            if not 0 <= start < stop <= total:
                raise ValueError(f"segment ({start}, {stop}) out of bounds")
        return list(spec.segments)
    length = max(2, int(round(spec.rate * total)))
    if length >= total:
        raise ValueError("segment rate too large for the series")
    start = int(rng.integers(0, total - length + 1))
    return [(start, start + length)]


def inject(dataset: Dataset, spec: InjectionSpec) -> Dataset:
    """Return a copy with anomalies written and ground truth labeled.

    Values change only at labeled positions. Overlapping injections on a
    channel raise instead of silently stacking.
    """
    values = dataset.values.copy()
    labels = (dataset.labels if dataset.labels is not None else np.zeros_like(values, dtype=np.uint8)).copy()
    kinds = (dataset.kinds if dataset.kinds is not None else np.zeros_like(values, dtype=np.int8)).copy()
    n, m, total = values.shape
    targets = spec.targets if spec.targets is not None else [
        (i, j) for i in range(n) for j in range(m)
    ]
    code = KIND_CODES[spec.kind]
    seq = np.random.SeedSequence([spec.seed, code])
    for (node, modality), child in zip(targets, seq.spawn(len(targets))):
        rng = np.random.default_rng(child)
        if not (0 <= node < n and 0 <= modality < m):
            raise ValueError(f"target ({node}, {modality}) out of range")
        series = values[node, modality]
        chan_labels = labels[node, modality]
        std = float(series.std())
        gmin, gmax = float(series.min()), float(series.max())
        span = gmax - gmin
        if spec.kind == "point":
            count = int(round(spec.rate * total))
            ticks = _pick_isolated_ticks(rng, total, count)
            if chan_labels[ticks].any():
                raise ValueError("overlapping injection at already-labeled ticks")
            signs = rng.choice((-1.0, 1.0), size=ticks.size)
            series[ticks] += signs * spec.magnitude * std
            chan_labels[ticks] = 1
            kinds[node, modality, ticks] = code
        else:
            for start, stop in _segments_for(spec, rng, total):
                if chan_labels[start:stop].any():
                    raise ValueError("overlapping injection on channel segment")
                seg = series[start:stop]
                if spec.kind == "context":
                    center = 0.5 * (gmin + gmax)
                    sign = 1.0 if seg.mean() <= center else -1.0
                    offset = sign * spec.magnitude * std
                    # keep the shifted segment within 5% of the global range
                    head = (gmax + 0.05 * span) - seg.max() if sign > 0 else seg.min() - (gmin - 0.05 * span)
                    offset = sign * min(abs(offset), max(head, 0.0))
                    series[start:stop] = seg + offset
                elif spec.kind == "collective":
                    mean = seg.mean()
                    amp = min(spec.magnitude * std, 0.95 * (gmax - mean), 0.95 * (mean - gmin))
                    amp = max(amp, 0.25 * std)
                    freq = rng.uniform(0.3, 0.45)
                    phase = rng.uniform(0, 2 * np.pi)
                    i = np.arange(stop - start, dtype=np.float64)
                    series[start:stop] = mean + amp * np.sin(2 * np.pi * freq * i + phase)
                else:  # correlation: independent signal, same marginal stats
                    i = np.arange(stop - start, dtype=np.float64)
                    gen = np.zeros(stop - start)
                    for _ in range(2):
                        period = rng.uniform(20.0, 200.0)
                        gen += rng.uniform(0.5, 1.0) * np.sin(
                            2 * np.pi * i / period + rng.uniform(0, 2 * np.pi)
                        )
                    gen += rng.normal(0.0, 0.05, size=i.size)
                    gen = (gen - gen.mean()) / max(gen.std(), 1e-12)
                    series[start:stop] = seg.mean() + seg.std() * gen
                chan_labels[start:stop] = 1
                kinds[node, modality, start:stop] = code
    return replace(dataset, values=values, labels=labels, kinds=kinds)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def save_csv(path: str | Path, dataset: Dataset) -> None:
    """Long-format export: timestamp,node_id,modality,value[,label[,kind]].

    Floats are written with repr so a reload reproduces them bit-exactly.
    """
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        header = ["timestamp", "node_id", "modality", "value"]
        if dataset.labels is not None:
            header.append("label")
        if dataset.kinds is not None:
            header.append("kind")
        writer.writerow(header)
        for ti in range(dataset.n_ticks):
            for ni, node in enumerate(dataset.node_ids):
                for mi, modality in enumerate(dataset.modality_names):
                    row = [repr(float(dataset.timestamps[ti])), node, modality,
                           repr(float(dataset.values[ni, mi, ti]))]
                    if dataset.labels is not None:
                        row.append(str(int(dataset.labels[ni, mi, ti])))
                    if dataset.kinds is not None:
                        row.append(str(int(dataset.kinds[ni, mi, ti])))
                    writer.writerow(row)


def _grid_align(
    stamps: np.ndarray,
    tick: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Snap raw timestamps onto a regular tick grid; returns (grid, index)."""
    t0 = stamps.min()
    idx = np.round((stamps - t0) / tick).astype(np.int64)
    grid = t0 + np.arange(idx.max() + 1) * tick
    return grid, idx


def load_csv(
    path: str | Path,
    schema: str = "long",
    tick_seconds: float | None = None,
    gap_limit: int = 5,
    strict: bool = False,
) -> Dataset:
    """Ingest a CSV in the long or wide sensor-log schema onto a regular
    tick grid.

    Missing ticks are forward-filled up to ``gap_limit`` consecutive
    samples; ticks that stay unfilled on any channel are dropped (count
    logged). Duplicate (node, tick) rows keep the last value with a
    warning. Unparseable rows are skipped and logged unless ``strict``.
    """
    if schema not in ("long", "ibrl"):
        raise ValueError("schema must be 'long' or 'ibrl'")
    rows: list[tuple[float, str, str, float, int, int]] = []
    bad_rows = 0
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty CSV") from None
        header = [h.strip().lower() for h in header]
        if schema == "long":
            required = ["timestamp", "node_id", "modality", "value"]
            if header[: len(required)] != required:
                raise ValueError(f"long schema needs header {required}, got {header}")
            has_label = "label" in header
            has_kind = "kind" in header
            label_col = header.index("label") if has_label else -1
            kind_col = header.index("kind") if has_kind else -1
            for lineno, raw in enumerate(reader, start=2):
                try:
                    stamp = float(raw[0])
                    value = float(raw[3])
                    label = int(raw[label_col]) if has_label else 0
                    kind = int(raw[kind_col]) if has_kind else 0
                    rows.append((stamp, raw[1], raw[2], value, label, kind))
                except (ValueError, IndexError) as e:
                    if strict:
                        raise ValueError(f"unparseable row {lineno}: {e}") from e
                    bad_rows += 1
        else:
            required = ["date", "time", "epoch", "moteid"]
            if header[: len(required)] != required:
                raise ValueError(f"ibrl schema needs header starting {required}")
            modal_cols = header[4:]
            if not modal_cols:
                raise ValueError("ibrl schema needs at least one modality column")
            tick = tick_seconds or IBRL_TICK_SECONDS
            for lineno, raw in enumerate(reader, start=2):
                try:
                    epoch = int(float(raw[2]))
                    node = raw[3].strip()
                    for ci, name in enumerate(modal_cols):
                        cell = raw[4 + ci].strip()
                        if cell == "":
                            continue  # sparse logs leave holes; gap fill handles them
                        rows.append((epoch * tick, node, name, float(cell), 0, 0))
                except (ValueError, IndexError) as e:
                    if strict:
                        raise ValueError(f"unparseable row {lineno}: {e}") from e
                    bad_rows += 1
    if bad_rows:
        log.warning("skipped %d unparseable rows", bad_rows)
    if not rows:
        raise ValueError("no usable rows in CSV")

    stamps = np.array([r[0] for r in rows])
    if tick_seconds is not None:
        tick = tick_seconds
    elif schema == "ibrl":
        tick = IBRL_TICK_SECONDS
    else:
        uniq = np.unique(stamps)
        tick = float(np.median(np.diff(uniq))) if uniq.size > 1 else 1.0
    grid, tick_idx = _grid_align(stamps, tick)

    node_ids = sorted({r[1] for r in rows})
    modality_names = sorted({r[2] for r in rows})
    n_index = {s: i for i, s in enumerate(node_ids)}
    m_index = {s: i for i, s in enumerate(modality_names)}
    t_total = grid.size
    values = np.full((len(node_ids), len(modality_names), t_total), np.nan)
    labels = np.zeros(values.shape, dtype=np.uint8)
    kinds = np.zeros(values.shape, dtype=np.int8)
    duplicates = 0
    for (stamp, node, modality, value, label, kind), ti in zip(rows, tick_idx):
        ni, mi = n_index[node], m_index[modality]
        if not np.isnan(values[ni, mi, ti]):
            duplicates += 1
        values[ni, mi, ti] = value  # last-wins on duplicates
        labels[ni, mi, ti] = label
        kinds[ni, mi, ti] = kind
    if duplicates:
        log.warning("%d duplicate (node, tick) rows; kept the last value", duplicates)

    # forward-fill short gaps, then drop ticks that stay unfilled anywhere
    for ni in range(values.shape[0]):
        for mi in range(values.shape[1]):
            chan = values[ni, mi]
            run = 0
            for ti in range(t_total):
                if np.isnan(chan[ti]):
                    run += 1
                    if ti > 0 and run <= gap_limit and not np.isnan(chan[ti - 1]):
                        chan[ti] = chan[ti - 1]
                else:
                    run = 0
    good = ~np.isnan(values).any(axis=(0, 1))
    dropped = int((~good).sum())
    if dropped:
        log.warning("dropped %d ticks with unfillable gaps", dropped)
    if not good.any():
        raise ValueError("no complete ticks after gap handling")
    return Dataset(
        node_ids=node_ids,
        modality_names=modality_names,
        timestamps=grid[good],
        values=values[:, :, good],
        labels=labels[:, :, good],
        kinds=kinds[:, :, good],
    )
