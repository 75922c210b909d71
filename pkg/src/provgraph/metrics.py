"""Graph-comparison scores: node/edge precision and recall, vertex-edge overlap."""

from __future__ import annotations

import enum
import json
import statistics
from dataclasses import asdict, dataclass
from typing import Dict, List, Sequence

from .errors import InvalidGroundTruth
from .graph import ProvenanceGraph

METRIC_NAMES = ("precision_nodes", "recall_nodes", "precision_edges", "recall_edges", "veo")


class SizeClass(str, enum.Enum):
    SMALL = "Small"
    MEDIUM = "Medium"
    LARGE = "Large"

    @classmethod
    def of(cls, n_nodes: int) -> "SizeClass":
        if n_nodes <= 12:
            return cls.SMALL
        if n_nodes <= 20:
            return cls.MEDIUM
        return cls.LARGE


@dataclass(frozen=True)
class EvalReport:
    precision_nodes: float
    recall_nodes: float
    precision_edges: float
    recall_edges: float
    veo: float
    size_class: SizeClass

    def to_dict(self) -> dict:
        d = asdict(self)
        d["size_class"] = self.size_class.value
        return d


def _ratio(num: int, den: int) -> float:
    # empty prediction found nothing: precision 0 rather than undefined
    return num / den if den else 0.0


def score(predicted: ProvenanceGraph, truth: ProvenanceGraph) -> EvalReport:
    if not truth.nodes:
        raise InvalidGroundTruth("ground-truth graph has no nodes")
    nodes_hit = len(predicted.nodes & truth.nodes)
    edges_hit = len(predicted.edges & truth.edges)
    denom = len(predicted.nodes) + len(truth.nodes) + len(predicted.edges) + len(truth.edges)
    return EvalReport(
        precision_nodes=_ratio(nodes_hit, len(predicted.nodes)),
        recall_nodes=_ratio(nodes_hit, len(truth.nodes)),
        precision_edges=_ratio(edges_hit, len(predicted.edges)),
        # a single-node truth has no edges to recall
        recall_edges=_ratio(edges_hit, len(truth.edges)) if truth.edges else float(not predicted.edges),
        veo=2.0 * (nodes_hit + edges_hit) / denom,
        size_class=SizeClass.of(len(truth.nodes)),
    )


def _mean_std(values: List[float]):
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def aggregate(reports: Sequence[EvalReport]) -> Dict[str, dict]:
    """Mean and sample std per metric, per size class plus an ``Overall`` row.

    Classes with no reports map to ``None``.
    """
    if not reports:
        raise ValueError("aggregate needs at least one report")
    table: Dict[str, dict] = {}
    groups = [(c.value, [r for r in reports if r.size_class is c]) for c in SizeClass]
    groups.append(("Overall", list(reports)))
    for name, group in groups:
        if not group:
            table[name] = None
            continue
        row = {"count": len(group)}
        for metric in METRIC_NAMES:
            mean, std = _mean_std([getattr(r, metric) for r in group])
            row[metric] = {"mean": mean, "std": std}
        table[name] = row
    return table


def format_table(table: Dict[str, dict], title: str = "") -> str:
    """Aligned plain-text table, one row per size class, cells as ``mean ∓ std``."""
    header = ["Size", "n"] + [m.replace("_", " ") for m in METRIC_NAMES]
    rows = []
    for name, row in table.items():
        if row is None:
            rows.append([name, "0"] + ["absent"] * len(METRIC_NAMES))
        else:
            rows.append([name, str(row["count"])] + [
                f"{row[m]['mean']:.2f} ∓{row[m]['std']:.2f}" for m in METRIC_NAMES
            ])
    widths = [max(len(r[i]) for r in rows + [header]) for i in range(len(header))]
    fmt = lambda cells: " | ".join(c.ljust(w) for c, w in zip(cells, widths))
    lines = ([title] if title else []) + [fmt(header), "-+-".join("-" * w for w in widths)]
    lines += [fmt(r) for r in rows]
    return "\n".join(lines) + "\n"


def table_to_json(table: Dict[str, dict]) -> str:
    return json.dumps(table, indent=2, sort_keys=True) + "\n"
