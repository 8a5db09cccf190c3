"""Anchor-grounded contrastive sampling of windows for rule synthesis.

Each synthesis epoch works from a contrastive group: a handful of windows
from the target cluster that look alike (anchored at the most
token-diverse member), next to the opposite-label windows that resemble
them most.  A rule that separates these two small sides has seen both the
pattern it must capture and the traffic it must not.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .clustering import Cluster, WindowFeature
from .corpus import LogWindow, tokenize


@dataclass(frozen=True)
class ContrastiveGroup:
    """Windows selected for one synthesis epoch.

    same_label_windows carry the target kind and include the anchor;
    opposite_label_windows carry the other label.  cluster_id records the
    source cluster so a failed epoch can be attributed to it.
    """

    target_kind: str
    anchor_id: int
    same_label_windows: tuple[LogWindow, ...]
    opposite_label_windows: tuple[LogWindow, ...]
    cluster_id: int

    def __post_init__(self) -> None:
        same_ids = [w.id for w in self.same_label_windows]
        opp_ids = [w.id for w in self.opposite_label_windows]
        if len(set(same_ids)) != len(same_ids) or len(set(opp_ids)) != len(opp_ids):
            raise ValueError("duplicate window ids within a side")
        if self.anchor_id not in same_ids:
            raise ValueError("anchor must be among the same-label windows")


def diversity_score(window: LogWindow) -> float:
    """Unique tokens over total tokens across the window; 0 when tokenless."""
    tokens: list[str] = []
    for line in window.lines:
        tokens.extend(tokenize(line))
    if not tokens:
        return 0.0
    return len(set(tokens)) / len(tokens)


def select_anchor(cluster: Cluster, windows_by_id: Mapping[int, LogWindow]) -> int:
    """The member with maximal diversity; ties go to the smallest id."""
    if not cluster.member_window_ids:
        raise ValueError("cannot pick an anchor from an empty cluster")
    best_id = None
    best_score = -1.0
    for wid in sorted(cluster.member_window_ids):
        score = diversity_score(windows_by_id[wid])
        if score > best_score:
            best_score = score
            best_id = wid
    return best_id


def jaccard(f1: frozenset[str], f2: frozenset[str]) -> float:
    """Jaccard similarity of two token sets; two empty sets score 0."""
    if not f1 and not f2:
        return 0.0
    return len(f1 & f2) / len(f1 | f2)


def sample_same_label(
    cluster: Cluster,
    anchor_id: int,
    features: Mapping[int, WindowFeature],
    group_width: int,
    theta_anchor: float,
) -> list[int]:
    """Anchor plus the w-1 members most similar to it above the threshold.

    Members below theta_anchor are excluded outright; a group may therefore
    be smaller than w.  Ties break toward the smaller window id.
    """
    anchor_feature = features[anchor_id].tokens
    scored = []
    for wid in cluster.member_window_ids:
        if wid == anchor_id:
            continue
        sim = jaccard(features[wid].tokens, anchor_feature)
        if sim >= theta_anchor:
            scored.append((-sim, wid))
    scored.sort()
    return [anchor_id] + [wid for _, wid in scored[: group_width - 1]]


def dedup_by_feature(
    window_ids: Sequence[int], features: Mapping[int, WindowFeature]
) -> list[int]:
    """Keep the smallest-id representative of each distinct feature set."""
    seen: set[frozenset[str]] = set()
    out = []
    for wid in sorted(window_ids):
        tokens = features[wid].tokens
        if tokens in seen:
            continue
        seen.add(tokens)
        out.append(wid)
    return out


def sample_opposite_label(
    selected_ids: Sequence[int],
    pool_ids: Sequence[int],
    features: Mapping[int, WindowFeature],
    group_width: int,
) -> list[int]:
    """Top-w pool windows by mean similarity to the selected windows.

    The pool is expected to be deduplicated already.  An empty pool yields
    an empty list (the caller skips the epoch); all-zero scores still
    return the top w by the smaller-id tie rule, since dissimilar contrast
    is better than none.
    """
    if not selected_ids:
        raise ValueError("no selected windows to contrast against")
    selected_features = [features[wid].tokens for wid in selected_ids]
    scored = []
    for pid in pool_ids:
        tokens = features[pid].tokens
        score = sum(jaccard(tokens, sel) for sel in selected_features) / len(
            selected_features
        )
        scored.append((-score, pid))
    scored.sort()
    return [pid for _, pid in scored[:group_width]]


def build_contrastive_group(
    clusters: Sequence[Cluster],
    windows_by_id: Mapping[int, LogWindow],
    features: Mapping[int, WindowFeature],
    opposite_pool_ids: Sequence[int],
    target_kind: str,
    group_width: int,
    theta_anchor: float,
) -> ContrastiveGroup | None:
    """Assemble the epoch's group from the largest cluster.

    Cluster choice: most members, ties to the smaller cluster id.  Returns
    None when no cluster has members or the opposite pool is empty, which
    signals the phase has nothing left to contrast.
    """
    candidates = [c for c in clusters if c.member_window_ids]
    if not candidates or not opposite_pool_ids:
        return None
    cluster = min(candidates, key=lambda c: (-len(c.member_window_ids), c.id))
    anchor_id = select_anchor(cluster, windows_by_id)
    same_ids = sample_same_label(
        cluster, anchor_id, features, group_width, theta_anchor
    )
    opp_ids = sample_opposite_label(same_ids, opposite_pool_ids, features, group_width)
    return ContrastiveGroup(
        target_kind=target_kind,
        anchor_id=anchor_id,
        same_label_windows=tuple(windows_by_id[w] for w in same_ids),
        opposite_label_windows=tuple(windows_by_id[w] for w in opp_ids),
        cluster_id=cluster.id,
    )
