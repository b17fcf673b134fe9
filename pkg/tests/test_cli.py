"""End-to-end command-line tests: exit codes, output shapes, settings
precedence, and the build -> inspect -> query -> scan -> eval -> audit
round trip on a temporary knowledge base."""

from __future__ import annotations

import json
import re
import shutil
from pathlib import Path

import pytest

from malsift import cli
from malsift.store import load_kb

FIXTURES = Path(__file__).parent / "fixtures"
KB_MANIFEST = FIXTURES / "reports" / "kb_set" / "manifest.json"
PACKAGES = FIXTURES / "packages"


def run_cli(capsys, argv):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def kb_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_kb") / "kb"
    code = cli.main(["kb", "build", "--manifest", str(KB_MANIFEST), "--out", str(out)])
    assert code == cli.EXIT_OK
    return out


class TestKbBuildInspect:
    def test_build_reports_version_and_counts(self, capsys, tmp_path):
        out = tmp_path / "kb"
        code, stdout, _ = run_cli(
            capsys,
            ["kb", "build", "--manifest", str(KB_MANIFEST), "--out", str(out), "--dim", "128"],
        )
        assert code == cli.EXIT_OK
        assert re.search(r"^kb_version: [0-9a-f]{64}$", stdout, re.M)
        assert "entries: 11" in stdout
        assert "validated: 11" in stdout
        assert (out / "manifest.json").is_file()

    def test_inspect_prints_header(self, capsys, kb_dir):
        code, stdout, _ = run_cli(capsys, ["kb", "inspect", str(kb_dir)])
        assert code == cli.EXIT_OK
        assert re.search(r"^kb_version: [0-9a-f]{64}$", stdout, re.M)
        assert "embedder: fnv1a-bag dim=256" in stdout
        assert "entries: 11" in stdout
        assert re.search(r"^clusters: \d+$", stdout, re.M)

    def test_inspect_corrupt_kb_is_internal_error(self, capsys, kb_dir, tmp_path):
        broken = tmp_path / "broken"
        shutil.copytree(kb_dir, broken)
        blob = broken / "e_code.f32"
        blob.write_bytes(blob.read_bytes()[:-4])
        code, _, stderr = run_cli(capsys, ["kb", "inspect", str(broken)])
        assert code == cli.EXIT_INTERNAL
        assert "malsift:" in stderr

    def test_build_missing_manifest_is_usage_error(self, capsys, tmp_path):
        code, _, stderr = run_cli(
            capsys,
            ["kb", "build", "--manifest", str(tmp_path / "absent.json"), "--out", str(tmp_path / "kb")],
        )
        assert code == cli.EXIT_USAGE
        assert "not found" in stderr


class TestKbQuery:
    MATCH_LINE = re.compile(
        r"^\S+ sim_code=-?\d\.\d{6} sim_behav=-?\d\.\d{6} sim_total=-?\d\.\d{6}$"
    )

    def test_query_prints_k_matches(self, capsys, kb_dir):
        snippet = PACKAGES / "m01_fetch_exec" / "main.py"
        code, stdout, _ = run_cli(
            capsys,
            ["kb", "query", str(kb_dir), "--snippet-file", str(snippet), "--k", "3"],
        )
        assert code == cli.EXIT_OK
        lines = stdout.splitlines()
        assert len(lines) == 3
        assert all(self.MATCH_LINE.match(line) for line in lines)

    def test_precedence_flag_beats_env_beats_config(self, capsys, kb_dir, tmp_path, monkeypatch):
        snippet = PACKAGES / "m01_fetch_exec" / "main.py"
        config = tmp_path / "settings.json"
        config.write_text(json.dumps({"k": 1}), encoding="utf-8")
        base = ["kb", "query", str(kb_dir), "--snippet-file", str(snippet), "--config", str(config)]

        code, stdout, _ = run_cli(capsys, base)
        assert code == cli.EXIT_OK
        assert len(stdout.splitlines()) == 1

        monkeypatch.setenv("MALSIFT_K", "2")
        code, stdout, _ = run_cli(capsys, base)
        assert code == cli.EXIT_OK
        assert len(stdout.splitlines()) == 2

        code, stdout, _ = run_cli(capsys, base + ["--k", "3"])
        assert code == cli.EXIT_OK
        assert len(stdout.splitlines()) == 3

    def test_config_must_be_object(self, capsys, kb_dir, tmp_path):
        snippet = PACKAGES / "m01_fetch_exec" / "main.py"
        config = tmp_path / "settings.json"
        config.write_text("[1, 2]", encoding="utf-8")
        code, _, stderr = run_cli(
            capsys,
            ["kb", "query", str(kb_dir), "--snippet-file", str(snippet), "--config", str(config)],
        )
        assert code == cli.EXIT_USAGE
        assert "invalid input" in stderr


class TestScan:
    def test_malicious_package_exits_3(self, capsys, kb_dir):
        code, stdout, _ = run_cli(
            capsys, ["scan", str(PACKAGES / "m01_fetch_exec"), "--kb", str(kb_dir)]
        )
        assert code == cli.EXIT_MALICIOUS
        assert "malicious" in stdout

    def test_benign_package_exits_0(self, capsys, kb_dir):
        code, stdout, _ = run_cli(
            capsys, ["scan", str(PACKAGES / "b01_config_reader"), "--kb", str(kb_dir)]
        )
        assert code == cli.EXIT_OK
        assert "benign" in stdout

    def test_json_output_parses(self, capsys, kb_dir):
        code, stdout, _ = run_cli(
            capsys, ["scan", str(PACKAGES / "m06_image_kit"), "--kb", str(kb_dir), "--json"]
        )
        assert code == cli.EXIT_MALICIOUS
        report = json.loads(stdout)
        assert report["package_label"] == "malicious"
        assert report["package_id"] == "m06_image_kit"
        assert report["responsible_slices"]

    def test_missing_package_is_usage_error(self, capsys, kb_dir, tmp_path):
        code, _, stderr = run_cli(
            capsys, ["scan", str(tmp_path / "no_such_pkg"), "--kb", str(kb_dir)]
        )
        assert code == cli.EXIT_USAGE
        assert "not found" in stderr

    def test_argparse_error_exits_1(self):
        with pytest.raises(SystemExit) as excinfo:
            cli.main(["scan"])
        assert excinfo.value.code == cli.EXIT_USAGE

    def test_unknown_command_exits_1(self):
        with pytest.raises(SystemExit) as excinfo:
            cli.main(["frobnicate"])
        assert excinfo.value.code == cli.EXIT_USAGE


class TestEval:
    @pytest.fixture()
    def small_manifest(self, tmp_path):
        rows = [
            {"path": str(PACKAGES / "b01_config_reader"), "label": "benign"},
            {"path": str(PACKAGES / "b02_file_digest"), "label": "benign"},
            {"path": str(PACKAGES / "m01_fetch_exec"), "label": "malicious"},
            {"path": str(PACKAGES / "m02_http_shell"), "label": "malicious"},
        ]
        path = tmp_path / "eval.json"
        path.write_text(json.dumps(rows), encoding="utf-8")
        return path

    def test_eval_writes_csv_and_figures(self, capsys, kb_dir, small_manifest, tmp_path):
        out_dir = tmp_path / "out"
        code, stdout, _ = run_cli(
            capsys,
            ["eval", "--manifest", str(small_manifest), "--kb", str(kb_dir), "--out-dir", str(out_dir)],
        )
        assert code == cli.EXIT_OK
        assert (out_dir / "results.csv").is_file()
        assert "accuracy=100.00" in stdout
        pngs = sorted(p.name for p in out_dir.glob("*.png"))
        assert pngs == ["confusion_matrix.png", "metrics_bars.png", "similarity_hist.png"]
        assert all((out_dir / name).stat().st_size > 0 for name in pngs)

    def test_no_figures_skips_rendering(self, capsys, kb_dir, small_manifest, tmp_path):
        out_dir = tmp_path / "out"
        code, stdout, _ = run_cli(
            capsys,
            [
                "eval",
                "--manifest",
                str(small_manifest),
                "--kb",
                str(kb_dir),
                "--out-dir",
                str(out_dir),
                "--no-figures",
            ],
        )
        assert code == cli.EXIT_OK
        assert (out_dir / "results.csv").is_file()
        assert not list(out_dir.glob("*.png"))
        assert "figure:" not in stdout

    def test_malformed_manifest_is_usage_error(self, capsys, kb_dir, tmp_path):
        bad = tmp_path / "eval.json"
        bad.write_text("not json", encoding="utf-8")
        code, _, stderr = run_cli(
            capsys,
            ["eval", "--manifest", str(bad), "--kb", str(kb_dir), "--out-dir", str(tmp_path / "out")],
        )
        assert code == cli.EXIT_USAGE
        assert "invalid input" in stderr


class TestAuditMark:
    def test_mark_promotes_entry_and_reversions(self, capsys, kb_dir, tmp_path):
        work = tmp_path / "kb"
        shutil.copytree(kb_dir, work)
        before = load_kb(work)
        entry_id = before.ids()[0]
        old_version = before.kb_version

        code, stdout, _ = run_cli(
            capsys, ["audit", "mark", entry_id, "expert_validated", "--kb", str(work)]
        )
        assert code == cli.EXIT_OK
        assert f"{entry_id}: expert_validated" in stdout

        after = load_kb(work)
        assert after.get(entry_id).audit == "expert_validated"
        assert after.kb_version != old_version

    def test_unknown_entry_is_usage_error(self, capsys, kb_dir, tmp_path):
        work = tmp_path / "kb"
        shutil.copytree(kb_dir, work)
        code, _, stderr = run_cli(
            capsys, ["audit", "mark", "doc-x:ffffffffffff", "expert_validated", "--kb", str(work)]
        )
        assert code == cli.EXIT_USAGE
        assert "unknown entry id" in stderr

    def test_invalid_status_rejected_by_parser(self):
        with pytest.raises(SystemExit) as excinfo:
            cli.main(["audit", "mark", "doc-x:ffffffffffff", "bogus", "--kb", "kb"])
        assert excinfo.value.code == cli.EXIT_USAGE
