"""Density clustering over entry embeddings: guards, votes, invariances."""

from __future__ import annotations

import numpy as np
import pytest

from malsift.clustering import (
    BEHAVIOR_LEVEL,
    CODE_LEVEL,
    ClusterParams,
    DegenerateClusterError,
    build_clusters,
    cluster_level,
    compute_centroid,
    predicates_for_entry,
    select_representative,
    vote_predicates,
)

from conftest import build_entry

DIM = 16


def planted_group(rng, axis, n, dim=DIM, jitter=0.005):
    base = np.zeros(dim)
    base[axis] = 1.0
    rows = base + jitter * rng.standard_normal((n, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows.astype(np.float32)


def entries_from_rows(rows, prefix, behavior, why):
    return [
        build_entry(
            f"{prefix}:{i:012d}",
            behavior=behavior,
            why=why,
            code_embedding=row,
            behavior_embedding=row,
            dim=rows.shape[1],
        )
        for i, row in enumerate(rows)
    ]


def test_presets_match_documented_values():
    assert CODE_LEVEL == ClusterParams(min_cluster_size=8, min_samples=4, epsilon=0.0)
    assert BEHAVIOR_LEVEL == ClusterParams(min_cluster_size=40, min_samples=8, epsilon=0.45)


def test_fewer_rows_than_min_cluster_size_is_all_noise():
    rng = np.random.default_rng(0)
    rows = planted_group(rng, 0, BEHAVIOR_LEVEL.min_cluster_size - 1)
    labels = cluster_level(rows.astype(np.float64), BEHAVIOR_LEVEL)
    assert (labels == -1).all()


def test_rows_not_exceeding_min_samples_is_all_noise():
    rng = np.random.default_rng(0)
    params = ClusterParams(min_cluster_size=2, min_samples=8, epsilon=0.0)
    rows = planted_group(rng, 0, 8)
    labels = cluster_level(rows.astype(np.float64), params)
    assert (labels == -1).all()


def test_empty_input_yields_empty_labels():
    labels = cluster_level(np.zeros((0, DIM)), CODE_LEVEL)
    assert labels.shape == (0,)


def test_cluster_level_rejects_non_2d_input():
    with pytest.raises(ValueError):
        cluster_level(np.zeros(DIM), CODE_LEVEL)


def test_two_tight_groups_get_two_labels():
    rng = np.random.default_rng(5)
    rows = np.vstack([planted_group(rng, 0, 12), planted_group(rng, 8, 12)])
    labels = cluster_level(rows.astype(np.float64), CODE_LEVEL)
    assert set(labels) == {0, 1}
    assert len(set(labels[:12])) == 1
    assert len(set(labels[12:])) == 1
    assert labels[0] != labels[12]


def test_centroid_is_the_normalized_mean():
    rng = np.random.default_rng(1)
    rows = planted_group(rng, 2, 9).astype(np.float64)
    centroid = compute_centroid(rows)
    manual = rows.mean(axis=0)
    manual /= np.linalg.norm(manual)
    assert centroid.dtype == np.float32
    np.testing.assert_array_equal(centroid, manual.astype(np.float32))
    assert abs(float(np.linalg.norm(centroid.astype(np.float64))) - 1.0) < 1e-6


def test_centroid_of_cancelling_vectors_is_degenerate():
    rows = np.zeros((2, DIM))
    rows[0, 0] = 1.0
    rows[1, 0] = -1.0
    with pytest.raises(DegenerateClusterError):
        compute_centroid(rows)


def test_centroid_requires_rows():
    with pytest.raises(ValueError):
        compute_centroid(np.zeros((0, DIM)))


def test_representative_maximizes_centroid_similarity():
    rows = np.zeros((3, DIM))
    rows[0, 0] = 1.0
    rows[1, 1] = 1.0
    rows[2, 0] = 1.0
    rows[2, 1] = 0.02
    rows[2] /= np.linalg.norm(rows[2])
    centroid = np.zeros(DIM, dtype=np.float32)
    centroid[0] = 1.0
    best = select_representative(["a", "b", "c"], rows, centroid)
    assert best == "a"


def test_representative_tie_takes_smallest_id():
    rows = np.zeros((2, DIM))
    rows[0, 0] = 1.0
    rows[1, 0] = 1.0
    centroid = rows[0].astype(np.float32)
    assert select_representative(["zz", "aa"], rows, centroid) == "aa"


def test_representative_requires_aligned_nonempty_input():
    with pytest.raises(ValueError):
        select_representative([], np.zeros((0, DIM)), np.zeros(DIM))
    with pytest.raises(ValueError):
        select_representative(["a"], np.zeros((2, DIM)), np.zeros(DIM))


def test_predicates_map_prose_to_the_closed_vocabulary():
    entry = build_entry(
        behavior="It executes commands or dynamically supplied code.",
        why="this backdoor exfiltrates captured credentials",
    )
    predicates = predicates_for_entry(entry)
    assert "command execution" in predicates
    assert "backdoor" in predicates
    assert "data exfiltration" in predicates
    assert "credential theft" in predicates


def test_vote_requires_strict_majority():
    votes = [
        frozenset({"backdoor", "persistence"}),
        frozenset({"backdoor"}),
        frozenset({"backdoor", "dropper"}),
        frozenset({"persistence"}),
    ]
    # backdoor 3/4 wins; persistence 2/4 is an exact tie and loses.
    assert vote_predicates(votes) == ("backdoor",)


def test_vote_rejects_zero_members_and_unknown_predicates():
    with pytest.raises(ValueError):
        vote_predicates([])
    with pytest.raises(ValueError):
        vote_predicates([frozenset({"novel-predicate"})])


def test_build_clusters_on_empty_input():
    result = build_clusters([])
    assert result.code_labels == {}
    assert result.behavior_clusters == ()


def test_build_clusters_requires_embeddings():
    import dataclasses

    entry = dataclasses.replace(build_entry(dim=DIM), code_embedding=None)
    with pytest.raises(ValueError):
        build_clusters([entry])


def test_small_entry_sets_produce_no_behavior_clusters():
    rng = np.random.default_rng(9)
    rows = planted_group(rng, 0, 11)
    entries = entries_from_rows(rows, "report-s", "It communicates with a remote network endpoint.", "beacons out")
    result = build_clusters(entries)
    assert result.behavior_clusters == ()
    assert set(result.code_labels) == {e.id for e in entries}


def test_build_clusters_membership_is_order_invariant():
    rng = np.random.default_rng(2)
    a = entries_from_rows(
        planted_group(rng, 0, 45), "report-a", "It exfiltrates data to a remote host.", "it transmits captured data"
    )
    b = entries_from_rows(
        planted_group(rng, 8, 45), "report-b", "It executes commands from a backdoor channel.", "it runs operator commands"
    )
    forward = build_clusters(a + b)
    backward = build_clusters(list(reversed(a + b)))

    def memberships(result):
        return {frozenset(c.member_ids) for c in result.behavior_clusters}

    assert memberships(forward) == memberships(backward)
    assert len(forward.behavior_clusters) == 2


def test_build_clusters_is_stable_under_member_duplication():
    rng = np.random.default_rng(3)
    a = entries_from_rows(
        planted_group(rng, 0, 45), "report-a", "It exfiltrates data to a remote host.", "it transmits captured data"
    )
    b = entries_from_rows(
        planted_group(rng, 8, 45), "report-b", "It executes commands from a backdoor channel.", "it runs operator commands"
    )
    extra_a = entries_from_rows(
        planted_group(rng, 0, 45), "report-a2", "It exfiltrates data to a remote host.", "it transmits captured data"
    )
    result = build_clusters(a + b + extra_a)
    assert len(result.behavior_clusters) == 2
    sizes = sorted(len(c.member_ids) for c in result.behavior_clusters)
    assert sizes == [45, 90]


def test_cluster_artifacts_are_internally_consistent():
    rng = np.random.default_rng(4)
    a = entries_from_rows(
        planted_group(rng, 0, 45), "report-a", "It exfiltrates data to a remote host.", "it transmits captured data"
    )
    b = entries_from_rows(
        planted_group(rng, 8, 45), "report-b", "It executes commands from a backdoor channel.", "it runs operator commands"
    )
    entries = a + b
    by_id = {e.id: e for e in entries}
    result = build_clusters(entries)
    assert len(result.behavior_clusters) == 2
    for cluster in result.behavior_clusters:
        assert cluster.representative_id in cluster.member_ids
        assert list(cluster.member_ids) == sorted(cluster.member_ids)
        rows = np.vstack(
            [np.asarray(by_id[m].behavior_embedding, dtype=np.float64) for m in cluster.member_ids]
        )
        np.testing.assert_array_equal(cluster.centroid, compute_centroid(rows))
        rep_why = by_id[cluster.representative_id].reasoning.why_suspicious
        assert cluster.unified_explanation.startswith(rep_why)
        for predicate in cluster.voted_predicates:
            holders = sum(1 for m in cluster.member_ids if predicate in predicates_for_entry(by_id[m]))
            assert 2 * holders > len(cluster.member_ids)
