import json
import logging

import pytest

from alignment import Alignment, Correspondence
from alignment_xml import read_alignment_file, write_alignment_file
from cli import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_STEP_FAILED, main


@pytest.fixture(autouse=True)
def isolated_env(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for name in ("MATCHKIT_DATA_DIR", "MATCHKIT_OUTPUT_DIR", "MATCHKIT_THREADS", "MATCHKIT_SEED",
                 "MATCHKIT_COARSE_GRID"):
        monkeypatch.delenv(name, raising=False)


def write_manifest(tmp_path, case, steps):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"name": "cli", "test_cases": [case], "steps": steps}), encoding="utf-8")
    return str(path)


def output_lines(capsys):
    return [line.split("\t") for line in capsys.readouterr().out.splitlines()]


class TestRunCommand:
    def test_outputs_on_stdout(self, twin_case, tmp_path, capsys):
        config = write_manifest(tmp_path, twin_case, [{"step": "base_match"}])
        assert main(["run", "--config", config, "--out", str(tmp_path / "out")]) == EXIT_OK
        lines = output_lines(capsys)
        assert [role for role, _ in lines] == ["alignment", "cube", "metrics"]
        assert lines[0][1].endswith("twin/alignment.rdf")

    def test_unknown_step(self, twin_case, tmp_path, caplog):
        config = write_manifest(tmp_path, twin_case, [{"step": "frobnicate"}])
        with caplog.at_level(logging.ERROR):
            assert main(["run", "--config", config]) == EXIT_CONFIG_ERROR
        assert "frobnicate" in caplog.text

    def test_unknown_parameter(self, twin_case, tmp_path):
        config = write_manifest(tmp_path, twin_case, [{"step": "threshold", "params": {"cutoff": 0.1}}])
        assert main(["run", "--config", config]) == EXIT_CONFIG_ERROR

    def test_missing_input(self, twin_case, tmp_path, capsys):
        case = {**twin_case, "target": str(tmp_path / "absent.nt")}
        config = write_manifest(tmp_path, case, [{"step": "base_match"}])
        assert main(["run", "--config", config]) == EXIT_STEP_FAILED
        assert capsys.readouterr().out == ""

    def test_invalid_thread_count(self, twin_case, tmp_path):
        config = write_manifest(tmp_path, twin_case, [{"step": "base_match"}])
        assert main(["run", "--config", config, "--threads", "0"]) == EXIT_CONFIG_ERROR

    def test_output_dir_from_environment(self, twin_case, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("MATCHKIT_OUTPUT_DIR", str(tmp_path / "env-out"))
        config = write_manifest(tmp_path, twin_case, [{"step": "base_match"}])
        assert main(["run", "--config", config]) == EXIT_OK
        assert all(path.startswith(str(tmp_path / "env-out")) for _, path in output_lines(capsys))

    def test_same_output_twice(self, twin_case, tmp_path, capsys):
        config = write_manifest(tmp_path, twin_case, [
            {"step": "base_match"},
            {"step": "similar_neighbours"},
            {"step": "rerank", "params": {"key": "filter/neighbours/jaccard"}},
            {"step": "naive_descending_extract"},
        ])
        main(["run", "--config", config, "--out", str(tmp_path / "a")])
        main(["run", "--config", config, "--out", str(tmp_path / "b")])
        for name in ("twin/alignment.rdf", "twin/cube.csv", "metrics.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestOtherCommands:
    def test_match(self, twin_case, tmp_path, capsys):
        args = ["match", "--source", twin_case["source"], "--target", twin_case["target"],
                "--filters", "--extract", "--out", str(tmp_path / "m")]
        assert main(args) == EXIT_OK
        ((role, path),) = output_lines(capsys)
        assert role == "alignment"
        alignment = read_alignment_file(path)
        assert len(alignment) == 160
        assert all("filter/neighbours/jaccard" in c.extensions for c in alignment)

    def test_embed(self, twin_case, tmp_path, capsys):
        args = ["embed", "--graph", twin_case["source"], "--walks-per-node", "2", "--depth", "2",
                "--dimensions", "4", "--epochs", "1", "--out", str(tmp_path / "e")]
        assert main(args) == EXIT_OK
        assert [role for role, _ in output_lines(capsys)] == ["walks", "embeddings"]
        header = (tmp_path / "e" / "embeddings.txt").read_text(encoding="utf-8").splitlines()[0]
        assert header.split()[1] == "4"

    def test_eval_and_cube(self, tmp_path, capsys):
        reference = write_alignment_file(
            Alignment([Correspondence("http://a/1", "http://b/1"), Correspondence("http://a/2", "http://b/2")]),
            tmp_path / "reference.rdf",
        )
        system = write_alignment_file(Alignment([Correspondence("http://a/1", "http://b/1")]), tmp_path / "system.rdf")

        assert main(["eval", "--system", str(system), "--reference", str(reference), "--out", str(tmp_path)]) == EXIT_OK
        assert main(["cube", "--system", str(system), "--reference", str(reference), "--out", str(tmp_path)]) == EXIT_OK
        assert [role for role, _ in output_lines(capsys)] == ["metrics", "cube"]

        metrics = (tmp_path / "metrics.csv").read_text(encoding="utf-8").splitlines()
        assert metrics[1].startswith("system,final,1,0.5,")
        cube = (tmp_path / "cube.csv").read_text(encoding="utf-8").splitlines()
        assert len(cube) == 3

    def test_eval_missing_file(self, tmp_path):
        assert main(["eval", "--system", str(tmp_path / "x.rdf"), "--reference", str(tmp_path / "y.rdf")]) \
            == EXIT_STEP_FAILED
