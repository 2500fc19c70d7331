"""
Report files for a set of evaluated models.

comparison.csv            Model,Dataset,MSE,MAE against the exact bounds
comparison_train.csv      the same columns, scored on the training records
matrix_<model>_<label>.csv and matrix_<model>_<label>_normalized.csv
scatter_<model>_<label>.csv (key,true,predicted) and .svg
selection_<model>.csv and selection_summary.csv when a selection rule is given

Reruns with the same inputs produce byte-identical files.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import matplotlib

matplotlib.use("Agg")

import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from .metrics import (  # noqa: E402
    DEFAULT_BINS,
    Metrics,
    binned_matrix,
    select_subpopulations,
    selection_agreement,
)

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
COMPARISON_COLUMNS = ["Model", "Dataset", "MSE", "MAE"]
DATASET_NAMES = {"lb": "Lower bound", "ub": "Upper bound"}
SVG_SETTINGS = {"svg.hashsalt": "pnslearn", "svg.fonttype": "path"}


@dataclass
class ModelEvaluation:
    """Predictions of one model for one label over the whole population."""

    model_name: str
    display_name: str
    label: str
    keys: np.ndarray
    truth: np.ndarray
    predictions: np.ndarray
    metrics: Metrics
    train_metrics: Optional[Metrics] = None

    @property
    def stem(self) -> str:
        return f"{self.model_name}_{self.label}"


def _write_csv(frame: pd.DataFrame, path: Path, index: bool = False) -> Path:
    frame.to_csv(path, index=index, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def comparison_frame(evaluations: List[ModelEvaluation], train: bool = False) -> pd.DataFrame:
    rows = []
    for evaluation in evaluations:
        scored = evaluation.train_metrics if train else evaluation.metrics
        if scored is None:
            continue
        dataset = DATASET_NAMES[evaluation.label] + (" (train)" if train else "")
        rows.append([evaluation.display_name, dataset, scored.mse, scored.mae])
    return pd.DataFrame(rows, columns=COMPARISON_COLUMNS)


def matrix_frame(counts: np.ndarray) -> pd.DataFrame:
    bins = counts.shape[0]
    frame = pd.DataFrame(counts, columns=[f"predicted_{i}" for i in range(bins)])
    frame.index.name = "true_bin"
    return frame


def scatter_svg(evaluation: ModelEvaluation, path: Path) -> Path:
    with matplotlib.rc_context(SVG_SETTINGS):
        figure = Figure(figsize=(4.5, 4.5))
        axes = figure.add_subplot()
        axes.plot([0, 1], [0, 1], color="0.5", linewidth=1)
        axes.scatter(
            evaluation.truth,
            evaluation.predictions,
            s=2,
            alpha=0.4,
            linewidths=0,
            rasterized=True,
        )
        axes.set_xlim(0, 1)
        axes.set_ylim(0, 1)
        axes.set_xlabel(f"True {DATASET_NAMES[evaluation.label].lower()}")
        axes.set_ylabel("Predicted")
        axes.set_title(evaluation.display_name)
        figure.tight_layout()
        figure.savefig(path, format="svg", dpi=100, metadata={"Date": None})
    return path


def _selection_outputs(
    evaluations: List[ModelEvaluation],
    output_dir: Path,
    min_lb: Optional[float],
    max_ub: Optional[float],
) -> List[Path]:
    by_model: Dict[str, Dict[str, ModelEvaluation]] = {}
    for evaluation in evaluations:
        by_model.setdefault(evaluation.model_name, {})[evaluation.label] = evaluation

    written, summary = [], []
    for name in sorted(by_model):
        pair = by_model[name]
        needed = [label for label, bound in (("lb", min_lb), ("ub", max_ub)) if bound is not None]
        if any(label not in pair for label in needed):
            logger.warning(f"Skipping selection for {name}: missing {', '.join(needed)} models")
            continue
        reference = pair[needed[0]]
        keys = reference.keys
        predicted = {label: pair[label].predictions for label in pair}
        truth = {label: pair[label].truth for label in pair}
        selected = select_subpopulations(
            keys, predicted.get("lb"), predicted.get("ub"), min_lb, max_ub
        )
        agreement = selection_agreement(
            selected, keys, truth.get("lb"), truth.get("ub"), min_lb, max_ub
        )
        rows = np.isin(keys, selected)
        frame = pd.DataFrame({"key": keys[rows]})
        for label in ("lb", "ub"):
            if label in pair:
                frame[f"predicted_{label}"] = predicted[label][rows]
                frame[f"true_{label}"] = truth[label][rows]
        written.append(_write_csv(frame, output_dir / f"selection_{name}.csv"))
        summary.append(
            [
                reference.display_name,
                agreement.selected,
                agreement.relevant,
                agreement.true_positives,
                agreement.precision,
                agreement.recall,
            ]
        )

    columns = ["Model", "Selected", "Relevant", "TruePositives", "Precision", "Recall"]
    written.append(
        _write_csv(pd.DataFrame(summary, columns=columns), output_dir / "selection_summary.csv")
    )
    return written


def emit_report(
    evaluations: List[ModelEvaluation],
    output_dir,
    bins: int = DEFAULT_BINS,
    svg: bool = True,
    select_min_lb: Optional[float] = None,
    select_max_ub: Optional[float] = None,
) -> List[Path]:
    """Write every report file; returns their paths."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    written = [_write_csv(comparison_frame(evaluations), output_dir / "comparison.csv")]
    if any(e.train_metrics is not None for e in evaluations):
        written.append(
            _write_csv(
                comparison_frame(evaluations, train=True),
                output_dir / "comparison_train.csv",
            )
        )

    for evaluation in evaluations:
        # out-of-range predictions land in the edge bins
        clipped = np.clip(evaluation.predictions, 0.0, 1.0)
        matrix = binned_matrix(clipped, evaluation.truth, bins)
        written.append(
            _write_csv(
                matrix_frame(matrix.counts),
                output_dir / f"matrix_{evaluation.stem}.csv",
                index=True,
            )
        )
        written.append(
            _write_csv(
                matrix_frame(matrix.normalized()),
                output_dir / f"matrix_{evaluation.stem}_normalized.csv",
                index=True,
            )
        )
        scatter = pd.DataFrame(
            {
                "key": evaluation.keys,
                "true": evaluation.truth,
                "predicted": evaluation.predictions,
            }
        )
        written.append(_write_csv(scatter, output_dir / f"scatter_{evaluation.stem}.csv"))
        if svg:
            written.append(scatter_svg(evaluation, output_dir / f"scatter_{evaluation.stem}.svg"))

    if select_min_lb is not None or select_max_ub is not None:
        written.extend(_selection_outputs(evaluations, output_dir, select_min_lb, select_max_ub))

    logger.info(f"Wrote {len(written)} report files to {output_dir}")
    return written
