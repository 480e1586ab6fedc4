from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from src.config import RunConfig
from src.db import ProtocolStore
from src.records import write_csv, write_resolved_config
from src.robustness import RobustnessCurve, generate_ensemble, robustness_curve
from src.services import load_or_optimize, resolve_model


@dataclass(frozen=True)
class RobustnessOutcome:
    curve: RobustnessCurve
    files: tuple[Path, ...]


def cmd_robustness(config: RunConfig) -> RobustnessOutcome:
    """Worst fidelity and mean objective over the noise levels for every approach and the QAOA baseline."""
    out_dir = Path(config.out_dir)
    model, ham = resolve_model(config)

    store = ProtocolStore(out_dir)
    try:
        controls = load_or_optimize(store, model, ham, config)
    finally:
        store.close()

    ensemble = generate_ensemble(
        config.ensemble.n_signals, config.ensemble.n_sections, config.ensemble_seed
    )
    curve = robustness_curve(
        ham,
        controls,
        ensemble,
        config.eps_levels,
        kind=config.cost.norm_kind(),
        n_jobs=config.optimizer.n_jobs,
    )
    files = (
        write_csv(curve.curves_frame(), out_dir / "curves.csv", config),
        write_csv(curve.bounds_frame(), out_dir / "bounds.csv", config),
        write_resolved_config(config, out_dir),
    )
    return RobustnessOutcome(curve, files)
