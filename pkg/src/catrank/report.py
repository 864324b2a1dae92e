"""Descriptive statistics and result tables.

Everything here formats data computed elsewhere; output is byte-identical
given identical inputs (floats rendered with repr, fixed orderings).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .coherence import CoherenceRanking
from .data_model import CategoryIndex, FeatureMatrix
from .neighbors import DEFAULT_EXACT_LIMIT, DEFAULT_SAMPLE_PAIRS, calibrate_thresholds


@dataclass
class CategoryStats:
    histogram: list[int]
    mean: float
    n_entities: int
    bucket_width: int
    subset_histogram: list[int] | None = None
    subset_mean: float | None = None
    subset_size: int | None = None
    subset_note: str | None = None


def category_stats(cats: CategoryIndex, subset=None, bucket_width: int = 1) -> CategoryStats:
    """Categories-per-entity histogram and mean, optionally for a subset too."""
    if bucket_width < 1:
        raise ValueError("bucket_width must be at least 1")
    counts = np.array([len(m) for m in cats.memberships], dtype=np.int64)
    hist = np.bincount(counts // bucket_width)
    stats = CategoryStats(
        histogram=hist.tolist(),
        mean=float(counts.mean()) if len(counts) else 0.0,
        n_entities=cats.n_entities,
        bucket_width=bucket_width,
    )
    if subset is not None:
        subset = np.asarray(list(subset), dtype=np.int64)
        if len(subset) == 0:
            stats.subset_note = "subset empty; subset section omitted"
        else:
            sub = counts[subset]
            stats.subset_histogram = np.bincount(sub // bucket_width).tolist()
            stats.subset_mean = float(sub.mean())
            stats.subset_size = int(len(subset))
    return stats


def stats_text(stats: CategoryStats) -> str:
    out = io.StringIO()
    out.write(f"entities: {stats.n_entities}\n")
    out.write(f"mean categories per entity: {repr(stats.mean)}\n")
    out.write(f"histogram (bucket width {stats.bucket_width}):\n")
    for b, c in enumerate(stats.histogram):
        out.write(f"  {b * stats.bucket_width:>6}  {c}\n")
    if stats.subset_note:
        out.write(stats.subset_note + "\n")
    elif stats.subset_histogram is not None:
        out.write(f"subset size: {stats.subset_size}\n")
        out.write(f"subset mean categories per entity: {repr(stats.subset_mean)}\n")
        out.write("subset histogram:\n")
        for b, c in enumerate(stats.subset_histogram):
            out.write(f"  {b * stats.bucket_width:>6}  {c}\n")
    return out.getvalue()


def distance_quantiles(features: FeatureMatrix, metric: str, targets,
                       exact_limit: int = DEFAULT_EXACT_LIMIT,
                       sample_pairs: int = DEFAULT_SAMPLE_PAIRS,
                       seed: int = 0, workers: int = 1) -> list[tuple[float, float]]:
    """(target average neighbor count, calibrated distance threshold) rows.

    One shared distance pool keeps the thresholds monotone across targets.
    """
    targets = list(targets)
    if not targets:
        raise ValueError("no targets given")
    ds = calibrate_thresholds(features, metric, targets, exact_limit=exact_limit,
                              sample_pairs=sample_pairs, seed=seed, workers=workers)
    return list(zip([float(t) for t in targets], ds))


def quantiles_csv(rows: list[tuple[float, float]]) -> str:
    lines = ["target_avg_neighbors,distance_threshold"]
    for t, d in rows:
        lines.append(f"{t:g},{repr(d)}")
    return "\n".join(lines) + "\n"


@dataclass
class TopTable:
    rows: list[dict]
    truncated_note: str | None = None


def top_table(ranking: CoherenceRanking, n: int, cats: CategoryIndex) -> TopTable:
    """First n rows of a ranking; asking past the end returns everything."""
    if n < 1:
        raise ValueError("n must be at least 1")
    note = None
    if n > len(ranking):
        note = f"requested {n} rows, ranking has {len(ranking)}"
        n = len(ranking)
    rows = []
    for rank, s in enumerate(ranking.scores[:n], 1):
        rows.append({
            "rank": rank,
            "category": cats.names[s.category],
            "criterion_value": _criterion_value(ranking.criterion, s),
            "conductance": s.conductance,
            "log_surprise": s.log_surprise,
            "n_members": s.n_members,
            "n_observers_used": s.n_observers_used,
        })
    return TopTable(rows=rows, truncated_note=note)


def _criterion_value(criterion: str, score):
    return score.conductance if criterion == "conductance" else score.log_surprise


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def ranking_csv(ranking: CoherenceRanking, cats: CategoryIndex) -> str:
    """Full ranking in the persistent CSV schema (natural-log surprise)."""
    lines = ["rank,category,criterion_value,conductance,log_surprise,n_members,n_observers_used"]
    for rank, s in enumerate(ranking.scores, 1):
        name = cats.names[s.category]
        if "," in name or '"' in name:
            name = '"' + name.replace('"', '""') + '"'
        lines.append(",".join([
            str(rank), name,
            _cell(_criterion_value(ranking.criterion, s)),
            _cell(s.conductance),
            _cell(s.log_surprise),
            str(s.n_members),
            str(s.n_observers_used),
        ]))
    return "\n".join(lines) + "\n"


def top_csv(table: TopTable) -> str:
    lines = ["rank,category,criterion_value,conductance,log_surprise,n_members,n_observers_used"]
    for r in table.rows:
        name = r["category"]
        if "," in name or '"' in name:
            name = '"' + name.replace('"', '""') + '"'
        lines.append(",".join([
            str(r["rank"]), name, _cell(r["criterion_value"]), _cell(r["conductance"]),
            _cell(r["log_surprise"]), str(r["n_members"]), str(r["n_observers_used"]),
        ]))
    return "\n".join(lines) + "\n"


def top_text(table: TopTable) -> str:
    headers = ["rank", "category", "criterion_value", "conductance",
               "log_surprise", "n_members", "n_observers_used"]
    cells = [[_cell(r[h]) for h in headers] for r in table.rows]
    widths = [max(len(h), *(len(c[i]) for c in cells)) if cells else len(h)
              for i, h in enumerate(headers)]
    out = io.StringIO()
    out.write("  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip() + "\n")
    for c in cells:
        out.write("  ".join(v.ljust(w) for v, w in zip(c, widths)).rstrip() + "\n")
    if table.truncated_note:
        out.write("# " + table.truncated_note + "\n")
    return out.getvalue()
