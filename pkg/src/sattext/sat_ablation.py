"""Multi-seed runs, ablation sweeps and the hyperparameter grid.

Every cell is an independent (mode, config) run; with ``jobs > 1`` cells are
farmed out to a ``multiprocessing.Pool`` and results come back in submission
order, so the tables are the same as for a sequential sweep.
"""
import itertools
from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .sat_config import SATConfig
from .sat_dataset import SATDataset
from .sat_defs import AblationKinds, AugKinds, TrainModes
from .sat_errors import ConfigurationError
from .sat_train import RunRecord, run_mode
from .utils.logger import sat_logger as logger

DEFAULT_SEEDS = (0, 1, 2, 3, 4)
LABELED_SIZES = (3, 10, 20)
GRID = {
    "eta": (5e-5, 1e-3),
    "mu": (3, 4, 5, 8, 10, 20),
    "tau": (0.90, 0.95, 0.99),
}

AGGREGATE_HEADER = ("setting", "seed", "test_accuracy", "test_macro_f1")


@dataclass(frozen=True)
class AblationRow:
    setting: str
    seed: int
    test_accuracy: float
    test_macro_f1: float


@dataclass(frozen=True)
class AggregateRow:
    setting: str
    n_seeds: int
    mean_accuracy: float
    std_accuracy: float
    mean_macro_f1: float
    std_macro_f1: float


@dataclass
class AblationTable:
    kind: str
    rows: List[AblationRow] = field(default_factory=list)
    aggregates: List[AggregateRow] = field(default_factory=list)
    records: List[RunRecord] = field(default_factory=list)


@dataclass
class GridTrial:
    overrides: Dict[str, float]
    dev_accuracy: float
    test_accuracy: float
    test_macro_f1: float


@dataclass
class GridResult:
    best_config: SATConfig
    best_dev_accuracy: float
    trials: List[GridTrial]


def mean_std(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    arr = np.asarray(values, dtype=np.float64)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), std


def _run_cell(cell: Tuple[str, SATConfig, SATDataset]) -> RunRecord:
    mode, cfg, dataset = cell
    return run_mode(mode, cfg, dataset)


def _run_cells(cells: List[Tuple[str, SATConfig, SATDataset]], jobs: int) -> List[RunRecord]:
    if jobs > 1 and len(cells) > 1:
        with Pool(processes=min(jobs, len(cells))) as pool:
            return pool.map(_run_cell, cells)
    return [_run_cell(cell) for cell in cells]


def aggregate(setting: str, records: Sequence[RunRecord]) -> AggregateRow:
    acc = mean_std([r.metrics.test_accuracy for r in records])
    f1 = mean_std([r.metrics.test_macro_f1 for r in records])
    return AggregateRow(setting, len(records), acc[0], acc[1], f1[0], f1[1])


def run_seeds(
    cfg: SATConfig,
    dataset: SATDataset,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    mode: str = TrainModes.SAT,
    jobs: int = 1,
) -> Tuple[List[RunRecord], AggregateRow]:
    records = _run_cells([(mode, cfg.replace(seed=s), dataset) for s in seeds], jobs)
    summary = aggregate(f"{mode}", records)
    logger.info(
        f"{mode} over {len(seeds)} seeds: acc {summary.mean_accuracy:.4f} +- {summary.std_accuracy:.4f}, "
        f"macro-F1 {summary.mean_macro_f1:.4f} +- {summary.std_macro_f1:.4f}"
    )
    return records, summary


def ablation_settings(kind: str, values: Optional[Sequence] = None) -> List[Tuple[str, Dict]]:
    """(setting name, config overrides) for every point of the sweep.

    ``labeled_size`` values are N_c; ``aug_combo`` values are ``"A+B"`` strings or
    (A, B) pairs and default to every unordered pair of SR, PD, RI, BT.
    """
    if kind == AblationKinds.LABELED_SIZE:
        values = LABELED_SIZES if values is None else values
        return [(f"n_c={int(v)}", {"n_c": int(v)}) for v in values]
    if kind == AblationKinds.AUG_COMBO:
        if values is None:
            pairs = list(itertools.combinations(AugKinds.ABLATION, 2))
        else:
            pairs = [tuple(v.split("+")) if isinstance(v, str) else tuple(v) for v in values]
        settings = []
        for pair in pairs:
            if len(pair) != 2 or pair[0] == pair[1]:
                raise ConfigurationError(f"an augmentation combo needs two distinct kinds, got {pair}")
            settings.append((f"{pair[0]}+{pair[1]}", {"alpha1": pair[0], "alpha2": pair[1]}))
        return settings
    raise ConfigurationError(f"unknown ablation {kind!r}, expected one of {AblationKinds.ALL}")


def run_ablation(
    kind: str,
    base_cfg: SATConfig,
    dataset: SATDataset,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    values: Optional[Sequence] = None,
    mode: str = TrainModes.SAT,
    jobs: int = 1,
) -> AblationTable:
    settings = ablation_settings(kind, values)
    cells = [
        (mode, base_cfg.replace(seed=s, **overrides), dataset) for _, overrides in settings for s in seeds
    ]
    records = _run_cells(cells, jobs)

    table = AblationTable(kind, records=records)
    for i, (name, _) in enumerate(settings):
        chunk = records[i * len(seeds):(i + 1) * len(seeds)]
        for seed, record in zip(seeds, chunk):
            table.rows.append(
                AblationRow(name, seed, record.metrics.test_accuracy, record.metrics.test_macro_f1)
            )
        table.aggregates.append(aggregate(name, chunk))
        logger.info(f"{kind} {name}: acc {table.aggregates[-1].mean_accuracy:.4f}")
    return table


def write_aggregate_csv(table: AblationTable, path: Union[str, Path]):
    """Per-seed rows, then a ``mean`` and a ``std`` row for each setting."""
    lines = [",".join(AGGREGATE_HEADER)]
    for row in table.rows:
        lines.append(f"{row.setting},{row.seed},{row.test_accuracy:.6f},{row.test_macro_f1:.6f}")
    for agg in table.aggregates:
        lines.append(f"{agg.setting},mean,{agg.mean_accuracy:.6f},{agg.mean_macro_f1:.6f}")
        lines.append(f"{agg.setting},std,{agg.std_accuracy:.6f},{agg.std_macro_f1:.6f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_grid_search(
    base_cfg: SATConfig,
    dataset: SATDataset,
    grid: Optional[Dict[str, Sequence]] = None,
    mode: str = TrainModes.SAT,
    jobs: int = 1,
) -> GridResult:
    """Try every combination of ``grid`` (default: eta x mu x tau) and keep the one
    with the best dev accuracy; ties keep the earliest combination."""
    grid = GRID if grid is None else grid
    keys = list(grid)
    combos = [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]
    cells = [(mode, base_cfg.replace(**overrides), dataset) for overrides in combos]
    records = _run_cells(cells, jobs)

    trials = [
        GridTrial(o, r.metrics.best_dev_accuracy, r.metrics.test_accuracy, r.metrics.test_macro_f1)
        for o, r in zip(combos, records)
    ]
    best = max(range(len(trials)), key=lambda i: (trials[i].dev_accuracy, -i))
    logger.info(f"grid search: best {trials[best].overrides} with dev acc {trials[best].dev_accuracy:.4f}")
    return GridResult(cells[best][1], trials[best].dev_accuracy, trials)
