"""Token-feature extraction and agglomerative clustering of log windows.

Each line contributes its top-k frequent tokens; a window's feature is the
top slice of the aggregated token ranking, sized as a fraction of the mean
window length.  Windows with identical feature sets seed the clusters, and
successive merge rounds relax the shared-token requirement one token at a
time, replacing merged features by their intersection.  Pair scanning is
either exhaustive (deterministic index order) or budgeted random sampling
under a fixed seed; both repeat until a full pass makes no merge.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .corpus import LogWindow, tokenize


@dataclass(frozen=True)
class WindowFeature:
    window_id: int
    tokens: frozenset[str]


@dataclass
class Cluster:
    """A group of windows sharing a feature token set."""

    id: int
    member_window_ids: set[int]
    feature: frozenset[str]

    def copy(self) -> "Cluster":
        return Cluster(self.id, set(self.member_window_ids), self.feature)


def line_top_tokens(line_text: str, k_line: int) -> list[str]:
    """The k most frequent tokens of a line, earlier first occurrence winning ties."""
    if k_line < 1:
        raise ValueError("k_line must be >= 1")
    counts = Counter(tokenize(line_text))
    # Counter preserves first-occurrence order, and sorted() is stable, so
    # equal counts keep their first-occurrence ranking.
    ranked = sorted(counts.items(), key=lambda item: -item[1])
    return [token for token, _ in ranked[:k_line]]


def window_feature_size(alpha: float, mean_window_lines: float) -> int:
    """Feature size int(alpha * L), clamped to at least one token."""
    return max(int(alpha * mean_window_lines), 1)


def window_feature(
    window: LogWindow, k_line: int, alpha: float, mean_window_lines: float
) -> WindowFeature:
    """Aggregate per-line top tokens and keep the window-level top slice.

    Aggregation keeps multiplicity: a token contributed by many lines
    outranks one contributed by few.  Ties fall back to first occurrence
    in line order.
    """
    aggregated: list[str] = []
    for line in window.lines:
        aggregated.extend(line_top_tokens(line, k_line))
    counts = Counter(aggregated)
    k_window = window_feature_size(alpha, mean_window_lines)
    ranked = sorted(counts.items(), key=lambda item: -item[1])
    return WindowFeature(window.id, frozenset(t for t, _ in ranked[:k_window]))


def initial_clusters(features: Iterable[WindowFeature]) -> list[Cluster]:
    """Group windows by identical feature sets, ids in first-appearance order."""
    groups: dict[frozenset[str], list[int]] = {}
    for feat in features:
        groups.setdefault(feat.tokens, []).append(feat.window_id)
    return [
        Cluster(i, set(ids), tokens) for i, (tokens, ids) in enumerate(groups.items())
    ]


def _merge(a: Cluster, b: Cluster) -> Cluster:
    return Cluster(
        min(a.id, b.id), a.member_window_ids | b.member_window_ids, a.feature & b.feature
    )


def _pass_exhaustive(clusters: list[Cluster], threshold: int) -> bool:
    merged_any = False
    i = 0
    while i < len(clusters):
        j = i + 1
        while j < len(clusters):
            if len(clusters[i].feature & clusters[j].feature) >= threshold:
                clusters[i] = _merge(clusters[i], clusters[j])
                del clusters[j]
                merged_any = True
            else:
                j += 1
        i += 1
    return merged_any


def _pass_sampled(
    clusters: list[Cluster], threshold: int, budget: int, rng: random.Random
) -> bool:
    merged_any = False
    for _ in range(budget):
        if len(clusters) < 2:
            break
        i, j = rng.sample(range(len(clusters)), 2)
        if i > j:
            i, j = j, i
        if len(clusters[i].feature & clusters[j].feature) >= threshold:
            clusters[i] = _merge(clusters[i], clusters[j])
            del clusters[j]
            merged_any = True
    return merged_any


def hac_merge(
    clusters: Sequence[Cluster],
    k_window: int,
    max_iters: int = 4,
    pair_budget: int | None = None,
    seed: int = 0,
) -> list[Cluster]:
    """Merge clusters over relaxation rounds r = 1..max_iters.

    Round r merges any pair sharing at least k_window - r feature tokens;
    the merged feature is the intersection and the merged id the smaller
    parent id.  pair_budget None scans all pairs deterministically; an
    integer budget samples that many candidate pairs per pass with a seeded
    PRNG.  Every round repeats passes until one makes no merge.  The input
    list is not modified.
    """
    out = [c.copy() for c in clusters]
    rng = random.Random(seed)
    for r in range(1, max_iters + 1):
        threshold = k_window - r
        while True:
            if pair_budget is None:
                merged = _pass_exhaustive(out, threshold)
            else:
                merged = _pass_sampled(out, threshold, pair_budget, rng)
            if not merged:
                break
    return out


def default_pair_budget(cluster_count: int, factor: int = 4) -> int:
    return max(factor * cluster_count, 1)


def mean_window_lines(windows: Sequence[LogWindow]) -> float:
    """Mean line count over windows; the L that sizes window features."""
    if not windows:
        raise ValueError("cannot take the mean of zero windows")
    return sum(len(w.lines) for w in windows) / len(windows)


def features_by_id(
    windows: Iterable[LogWindow], k_line: int, alpha: float, mean_lines: float
) -> Mapping[int, WindowFeature]:
    return {
        w.id: window_feature(w, k_line, alpha, mean_lines) for w in windows
    }
