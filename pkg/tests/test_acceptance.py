"""Nine pinned end-to-end checks over the full pipeline.

Each check prints exactly one `C<n> PASS/FAIL - <description>` line on
the terminal (outside pytest's capture) and enforces its own wall-clock
budget where one applies.  Oracles here are computed independently of
the code under test: brute-force rescoring for retrieval, hand-built
closures for slicing, and direct recomputation for clustering.
"""

from __future__ import annotations

import json
import re
import shutil
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from conftest import build_entry, unit_rows
from malsift.clustering import BEHAVIOR_LEVEL, build_clusters
from malsift.detector import (
    aggregate_verdicts,
    detect_package,
    slice_categories,
    slice_constructs,
    slice_sites,
    summarize_behavior,
)
from malsift.embedding import EmbedderIdentity, FallbackEmbedder
from malsift.evaluation import run_evaluation
from malsift.metrics import compute_metrics
from malsift.model import SliceVerdict
from malsift.pipeline import build_knowledge_base
from malsift.providers import MockProvider
from malsift.slicer import (
    backward_slice,
    build_program_graph,
    load_catalogue,
    load_package_source,
    locate_sensitive_calls,
)
from malsift.store import KnowledgeBase, combined_similarity, load_kb, normalize_weights, save_kb

FIXTURES = Path(__file__).parent / "fixtures"
PACKAGES = FIXTURES / "packages"
KB_MANIFEST = FIXTURES / "reports" / "kb_set" / "manifest.json"
SLICING = FIXTURES / "slicing"


@pytest.fixture()
def announce(capsys):
    @contextmanager
    def _announce(number: int, description: str, budget_s: float | None = None):
        start = time.perf_counter()
        try:
            yield
        except BaseException:
            with capsys.disabled():
                print(f"C{number} FAIL - {description}")
            raise
        elapsed = time.perf_counter() - start
        if budget_s is not None and elapsed > budget_s:
            with capsys.disabled():
                print(f"C{number} FAIL - {description} ({elapsed:.2f}s over the {budget_s:.0f}s budget)")
            pytest.fail(f"check {number} took {elapsed:.2f}s, budget {budget_s:.0f}s")
        with capsys.disabled():
            print(f"C{number} PASS - {description} ({elapsed:.2f}s)")

    return _announce


def test_c1_confusion_metrics_reference(announce):
    with announce(1, "confusion metrics reproduce the reference percentages", budget_s=1.0):
        metrics = compute_metrics(985, 5, 15, 995)
        expected = {"accuracy": 99.00, "precision": 99.49, "recall": 98.50, "f1": 98.99}
        for name, want in expected.items():
            got = getattr(metrics, name)
            assert abs(got - want) <= 0.01, f"{name}: {got} vs {want}"


def _random_kb(seed: int, dim: int = 32, max_entries: int = 1000):
    """A seeded KB of unit vectors; every seventh entry duplicates an
    earlier row pair so exact score ties occur."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_entries + 1))
    code = unit_rows(rng, n, dim)
    behav = unit_rows(rng, n, dim)
    for i in range(n):
        if i % 7 == 6:
            j = int(rng.integers(0, i))
            code[i] = code[j]
            behav[i] = behav[j]
    kb = KnowledgeBase(EmbedderIdentity("fnv1a-bag", dim, "1"))
    for i in range(n):
        kb.upsert_entry(
            build_entry(
                f"report-r{seed}:{i:012d}",
                code_embedding=code[i],
                behavior_embedding=behav[i],
                dim=dim,
            )
        )
    return kb, rng


def _brute_force_topk(kb, q_code, q_behav, k):
    qc = np.asarray(q_code, dtype=np.float64)
    qb = np.asarray(q_behav, dtype=np.float64)
    scored = []
    for entry in kb.entries():
        sc = float(np.dot(entry.code_embedding.astype(np.float64), qc))
        sb = float(np.dot(entry.behavior_embedding.astype(np.float64), qb))
        scored.append((entry.id, sc, sb, 0.5 * sc + 0.5 * sb))
    scored.sort(key=lambda row: (-row[3], row[0]))
    return scored[:k]


def test_c2_retrieval_matches_brute_force(announce):
    with announce(
        2, "top-k retrieval matches brute-force rescoring on 100 seeded KBs", budget_s=30.0
    ):
        for trial in range(100):
            kb, rng = _random_kb(seed=20260816 + trial)
            n = len(kb)
            for k in (1, 7, n):
                q_code = unit_rows(rng, 1, 32)[0]
                q_behav = unit_rows(rng, 1, 32)[0]
                result = kb.query_topk(q_code, q_behav, k=k, alpha=0.5, beta=0.5)
                got = [(m.entry_id, m.sim_code, m.sim_behav, m.sim_total) for m in result.matches]
                assert got == _brute_force_topk(kb, q_code, q_behav, k), f"trial {trial}, k={k}"


def test_c3_weighted_similarity_midpoint_and_rescaling(announce):
    with announce(3, "weighted similarity midpoint is exact; rescaled weights keep order"):
        assert combined_similarity(0.42, 0.93, 0.5, 0.5) == 0.675

        assert normalize_weights(0.5, 0.5) == (0.5, 0.5)
        for alpha, beta in ((0.3, 0.7), (1.0, 3.0), (0.25, 0.75)):
            for scale in (2.0, 4.0, 0.5, 1024.0):
                assert normalize_weights(scale * alpha, scale * beta) == normalize_weights(
                    alpha, beta
                )

        rng = np.random.default_rng(3)
        pairs = [(float(a), float(b)) for a, b in rng.uniform(-1.0, 1.0, size=(200, 2))]
        for raw_alpha, raw_beta in ((0.4, 1.3), (2.7, 0.9), (5.0, 5.0)):
            base = normalize_weights(raw_alpha, raw_beta)
            baseline = sorted(
                range(len(pairs)),
                key=lambda i: (-combined_similarity(*pairs[i], *base), i),
            )
            for scale in (3.7, 0.013, 250.0):
                scaled = normalize_weights(scale * raw_alpha, scale * raw_beta)
                order = sorted(
                    range(len(pairs)),
                    key=lambda i: (-combined_similarity(*pairs[i], *scaled), i),
                )
                assert order == baseline


def test_c4_slices_match_hand_closures(announce):
    with announce(4, "backward slices equal the hand-computed closures", budget_s=10.0):
        names = sorted(p.name for p in SLICING.iterdir() if p.is_dir())
        assert len(names) >= 12
        for name in names:
            expected = json.loads((SLICING / name / "expected.json").read_text())
            source = load_package_source(SLICING / name / "package")
            graph = build_program_graph(source)
            sites = locate_sensitive_calls(graph, load_catalogue())
            got_sites = [(s.file, s.line, s.api_name, s.category) for s in sites]
            want_sites = [
                (s["file"], s["line"], s["api_name"], s["category"]) for s in expected["sites"]
            ]
            assert got_sites == want_sites, name
            for site, record in zip(sites, expected["sites"]):
                closures = {
                    mode: backward_slice(graph, site, mode=mode)
                    for mode in ("data", "control", "both")
                }
                got = sorted((s.file, s.line) for s in closures["both"].statements)
                want = sorted((f, l) for f, l in record["slices"]["both"])
                assert got == want, f"{name}: {site.api_name}@{site.line}"
                keys = {
                    mode: {(s.file, s.line, s.source) for s in closures[mode].statements}
                    for mode in closures
                }
                assert keys["data"] | keys["control"] <= keys["both"], name


def _planted_group(rng, axis, count, dim, jitter):
    base = np.zeros(dim)
    base[axis] = 1.0
    rows = base + jitter * rng.standard_normal((count, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows.astype(np.float32)


def test_c5_planted_behavior_clusters_recovered(announce):
    with announce(5, "two planted behavior groups come back as exact clusters", budget_s=20.0):
        assert (
            BEHAVIOR_LEVEL.min_cluster_size,
            BEHAVIOR_LEVEL.min_samples,
            BEHAVIOR_LEVEL.epsilon,
        ) == (40, 8, 0.45)

        rng = np.random.default_rng(55)
        dim = 64
        group_a = _planted_group(rng, axis=0, count=50, dim=dim, jitter=0.005)
        group_b = _planted_group(rng, axis=1, count=50, dim=dim, jitter=0.005)

        a64 = group_a.astype(np.float64)
        b64 = group_b.astype(np.float64)
        for block in (a64, b64):
            gram = block @ block.T
            off_diagonal = ~np.eye(len(block), dtype=bool)
            assert np.max(1.0 - gram[off_diagonal]) < 0.05
        assert np.min(1.0 - a64 @ b64.T) > 0.8

        neutral = dict(
            why="the observed behavior does not match the stated purpose of the library",
            violations=(
                ("functional_boundary", "a utility library has no reason to perform this operation"),
            ),
            boundary="comparable legitimate libraries never do this",
        )
        entries = [
            build_entry(
                f"report-a:{i:012d}",
                behavior="It exfiltrates gathered files to a remote endpoint.",
                code_embedding=group_a[i],
                behavior_embedding=group_a[i],
                **neutral,
            )
            for i in range(50)
        ] + [
            build_entry(
                f"report-b:{i:012d}",
                behavior="It opens a backdoor and executes commands from its operator.",
                code_embedding=group_b[i],
                behavior_embedding=group_b[i],
                **neutral,
            )
            for i in range(50)
        ]

        result = build_clusters(entries)
        clusters = result.behavior_clusters
        assert len(clusters) == 2
        assert sorted(len(c.member_ids) for c in clusters) == [50, 50]

        predicted_of = {}
        for index, cluster in enumerate(clusters):
            for member in cluster.member_ids:
                predicted_of[member] = index
        truth = [0] * 50 + [1] * 50
        predicted = [predicted_of.get(e.id, -1) for e in entries]
        assert adjusted_rand_score(truth, predicted) == 1.0

        by_id = {e.id: e for e in entries}
        by_prefix = {c.member_ids[0].split(":")[0]: c for c in clusters}
        assert by_prefix["report-a"].voted_predicates == ("data exfiltration",)
        assert by_prefix["report-b"].voted_predicates == ("backdoor", "command execution")

        for cluster in clusters:
            vectors = np.vstack(
                [by_id[m].behavior_embedding.astype(np.float64) for m in cluster.member_ids]
            )
            mean = vectors.mean(axis=0)
            expected_centroid = (mean / np.linalg.norm(mean)).astype(np.float32)
            assert np.array_equal(cluster.centroid, expected_centroid)
            assert abs(float(np.linalg.norm(cluster.centroid.astype(np.float64))) - 1.0) < 1e-6

            assert cluster.representative_id in cluster.member_ids
            dots = vectors @ cluster.centroid.astype(np.float64)
            best = float(np.max(dots))
            contenders = [
                m for m, d in zip(cluster.member_ids, dots) if float(d) >= best - 1e-12
            ]
            assert cluster.representative_id == min(contenders)


def test_c6_labeled_corpus_scores_perfectly(announce):
    with announce(
        6, "the 20-package corpus is classified with 100.00 accuracy", budget_s=60.0
    ):
        provider = MockProvider()
        kb, stats = build_knowledge_base(KB_MANIFEST, provider, FallbackEmbedder(dim=256))
        assert stats.validated == 11

        manifest = PACKAGES / "eval_manifest.json"
        result = run_evaluation(manifest, kb, provider)
        assert all(row.status == "ok" for row in result.rows)
        assert result.metrics is not None
        counts = (result.metrics.tp, result.metrics.fp, result.metrics.fn, result.metrics.tn)
        assert counts == (10, 0, 0, 10)
        assert abs(result.metrics.accuracy - 100.00) <= 0.01

        for item in json.loads(manifest.read_text()):
            report = detect_package(PACKAGES / item["path"], kb, provider)
            assert report.package_label == item["label"]
            assert report.kb_version == kb.kb_version
            malicious_indexes = tuple(
                i for i, v in enumerate(report.slice_verdicts) if v.label == "malicious"
            )
            assert report.responsible_slices == malicious_indexes
            assert (report.package_label == "malicious") == bool(report.responsible_slices)
            assert set(report.timings) == {"slicing", "summarize", "retrieval", "classify", "total"}
            assert all(value >= 0.0 for value in report.timings.values())
            for verdict in report.slice_verdicts:
                assert len(verdict.scores) <= 5
                keys = [(-s.sim_total, s.entry_id) for s in verdict.scores]
                assert keys == sorted(keys)
                assert set(verdict.matched_entry_ids) <= {s.entry_id for s in verdict.scores}
                if verdict.label == "malicious":
                    assert verdict.matched_entry_ids


def _rename_identifiers(package_dir: Path, out_dir: Path, mapping: dict[str, str]) -> Path:
    renamed = out_dir / package_dir.name
    shutil.copytree(package_dir, renamed)
    pattern = re.compile(
        r"\b(" + "|".join(re.escape(k) for k in sorted(mapping, key=len, reverse=True)) + r")\b"
    )
    for path in renamed.rglob("*"):
        if path.is_file() and path.suffix in {".py", ".js"}:
            text = path.read_text(encoding="utf-8")
            path.write_text(pattern.sub(lambda m: mapping[m.group(0)], text), encoding="utf-8")
    return renamed


def _slice_summaries(package_dir: Path, provider) -> list[tuple[tuple[str, int, str], str]]:
    source = load_package_source(package_dir)
    graph = build_program_graph(source)
    sites = locate_sensitive_calls(graph, load_catalogue())
    summaries = []
    for site in sites:
        sliced = backward_slice(graph, site, mode="both")
        present = slice_sites(graph, sites, sliced)
        summary = summarize_behavior(
            provider, sliced, slice_categories(present), slice_constructs(present)
        )
        summaries.append(((site.file, site.line, site.api_name), summary))
    return summaries


def test_c7_identifier_renames_do_not_move_verdicts(announce, reports_kb, tmp_path):
    with announce(7, "identifier renames leave summaries, scores, and verdicts unchanged"):
        provider = MockProvider()
        rename_maps = json.loads((PACKAGES / "rename_maps.json").read_text())
        assert len(rename_maps) == 10
        for name, mapping in rename_maps.items():
            original_dir = PACKAGES / name
            renamed_dir = _rename_identifiers(original_dir, tmp_path, mapping)

            original_summaries = _slice_summaries(original_dir, provider)
            renamed_summaries = _slice_summaries(renamed_dir, provider)
            assert [key for key, _ in original_summaries] == [
                key for key, _ in renamed_summaries
            ], name
            for (key, before), (_, after) in zip(original_summaries, renamed_summaries):
                assert before == after, f"{name}: summary drifted at {key}"

            original = detect_package(original_dir, reports_kb, provider)
            renamed = detect_package(renamed_dir, reports_kb, provider)
            assert original.package_label == "malicious"
            assert renamed.package_label == original.package_label
            assert renamed.responsible_slices == original.responsible_slices
            assert len(renamed.slice_verdicts) == len(original.slice_verdicts)
            for before, after in zip(original.slice_verdicts, renamed.slice_verdicts):
                assert after.label == before.label
                behav_before = {s.entry_id: s.sim_behav for s in before.scores}
                behav_after = {s.entry_id: s.sim_behav for s in after.scores}
                for entry_id in behav_before.keys() & behav_after.keys():
                    assert abs(behav_before[entry_id] - behav_after[entry_id]) <= 1e-9, name


def _verdict(label: str) -> SliceVerdict:
    return SliceVerdict(label=label, explanation="synthetic", matched_entry_ids=(), scores=())


def test_c8_package_aggregation_properties(announce):
    with announce(8, "package aggregation is existential, order-free, and monotone"):
        import random

        rng = random.Random(88)
        cases = 0
        for _ in range(12_000):
            labels = [rng.choice(["malicious", "benign"]) for _ in range(rng.randint(0, 12))]
            verdicts = tuple(_verdict(l) for l in labels)
            label, responsible = aggregate_verdicts(verdicts)

            assert label == ("malicious" if "malicious" in labels else "benign")
            assert responsible == tuple(i for i, l in enumerate(labels) if l == "malicious")

            shuffled = labels[:]
            rng.shuffle(shuffled)
            label_shuffled, responsible_shuffled = aggregate_verdicts(
                tuple(_verdict(l) for l in shuffled)
            )
            assert label_shuffled == label
            assert len(responsible_shuffled) == len(responsible)

            grown, grown_responsible = aggregate_verdicts(verdicts + (_verdict("malicious"),))
            assert grown == "malicious"
            assert len(verdicts) in grown_responsible

            padded, _ = aggregate_verdicts(verdicts + (_verdict("benign"),))
            assert padded == label

            if "benign" in labels:
                flipped = labels[:]
                flipped[flipped.index("benign")] = "malicious"
                label_flipped, _ = aggregate_verdicts(tuple(_verdict(l) for l in flipped))
                assert label_flipped == "malicious"

            cases += 1
        assert cases >= 10_000


def test_c9_kb_round_trips_through_disk(announce, tmp_path):
    with announce(9, "saved KBs reload and rescore queries bit for bit"):
        for trial in range(10):
            kb, rng = _random_kb(seed=90_000 + trial, max_entries=300)
            queries = [(unit_rows(rng, 1, 32)[0], unit_rows(rng, 1, 32)[0]) for _ in range(3)]
            before = [kb.query_topk(qc, qb, k=9, alpha=0.5, beta=0.5) for qc, qb in queries]

            kb_dir = tmp_path / f"kb{trial}"
            version = save_kb(kb, kb_dir)
            loaded = load_kb(kb_dir)
            assert loaded.kb_version == version
            assert loaded.ids() == kb.ids()
            for blob_before, blob_after in zip(kb.matrices(), loaded.matrices()):
                assert np.array_equal(blob_before, blob_after)

            after = [loaded.query_topk(qc, qb, k=9, alpha=0.5, beta=0.5) for qc, qb in queries]
            for result_before, result_after in zip(before, after):
                got = [
                    (m.entry_id, m.sim_code, m.sim_behav, m.sim_total)
                    for m in result_after.matches
                ]
                want = [
                    (m.entry_id, m.sim_code, m.sim_behav, m.sim_total)
                    for m in result_before.matches
                ]
                assert got == want
