import json

import pytest
from click.testing import CliRunner

from mepg.cli import main
from mepg.geometry import layout_to_dict, Layout, RegionSpec, BoundingBox


@pytest.fixture()
def runner():
    return CliRunner()


class TestPlanCommand:
    def test_rule_plan_writes_layout(self, runner, tmp_path):
        out = tmp_path / "layout.json"
        trace = tmp_path / "trace.json"
        res = runner.invoke(main, [
            "plan", "a cat on the left and a dog on the right",
            "--backend", "rule", "--out", str(out), "--trace-out", str(trace)])
        assert res.exit_code == 0, res.output
        doc = json.loads(out.read_text())
        assert doc["schema"] == "mepg_layout_v1"
        assert [r["box"] for r in doc["regions"]] == \
            [[0, 250, 400, 750], [600, 250, 1000, 750]]
        tr = json.loads(trace.read_text())
        assert tr["backend_used"] == "rule"
        assert tr["fallback_engaged"] is False

    def test_ungrammatical_exit_2_with_offset(self, runner, tmp_path):
        res = runner.invoke(main, [
            "plan", "a cat at 45 degrees", "--out", str(tmp_path / "x.json")])
        assert res.exit_code == 2
        assert "byte offset" in res.output

    def test_llm_without_url_exit_2(self, runner, tmp_path):
        res = runner.invoke(main, [
            "plan", "a cat", "--backend", "llm", "--out", str(tmp_path / "x.json")])
        assert res.exit_code == 2


class TestGenerateCommand:
    def write_layout(self, tmp_path, expert="solo"):
        lay = Layout("soft blobs", [RegionSpec(BoundingBox(0, 0, 1000, 1000),
                                               "soft blobs", expert)])
        path = tmp_path / "layout.json"
        path.write_text(json.dumps(layout_to_dict(lay)))
        return path

    def test_generate_defaults_n50_p07(self, runner, tmp_path, tiny_expert_setup):
        layout = self.write_layout(tmp_path)
        out = tmp_path / "img.png"
        trace = tmp_path / "trace.jsonl"
        res = runner.invoke(main, [
            "generate", str(layout),
            "--experts-config", str(tiny_expert_setup["config_path"]),
            "--grid", "8x8", "--out", str(out), "--trace", str(trace)])
        assert res.exit_code == 0, res.output
        assert out.exists()
        records = [json.loads(l) for l in trace.read_text().splitlines()]
        assert len(records) == 50  # N=50 default
        stages = [r["stage"] for r in records]
        assert stages.count("local") == 35  # p1=0.7 default
        assert stages.count("global") == 15

    def test_invalid_layout_exit_2(self, runner, tmp_path, tiny_expert_setup):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({
            "schema": "mepg_layout_v1", "global_prompt": "g",
            "regions": [{"box": [0, 0, 2, 2], "prompt": "x"}]}))
        res = runner.invoke(main, [
            "generate", str(bad),
            "--experts-config", str(tiny_expert_setup["config_path"]),
            "--grid", "8x8", "--out", str(tmp_path / "img.png")])
        assert res.exit_code == 2

    def test_missing_checkpoint_exit_1(self, runner, tmp_path):
        cfg = tmp_path / "experts.json"
        cfg.write_text(json.dumps({"experts": [
            {"expert_id": "ghost", "checkpoint": str(tmp_path / "none.ckpt")}]}))
        layout = self.write_layout(tmp_path, expert="ghost")
        res = runner.invoke(main, [
            "generate", str(layout), "--experts-config", str(cfg),
            "--grid", "8x8", "--out", str(tmp_path / "img.png")])
        assert res.exit_code == 1


class TestTrainCommands:
    def test_train_expert_writes_checkpoint(self, runner, tmp_path):
        out = tmp_path / "expert.ckpt"
        res = runner.invoke(main, [
            "train-expert", "--style", "blobs", "--out", str(out),
            "--epochs", "1", "--train-size", "8", "--size", "8",
            "--n-timesteps", "5", "--target-ratio", "0"])
        assert res.exit_code == 0, res.output
        assert out.exists()
        meta = json.loads((tmp_path / "expert.ckpt.json").read_text())
        assert meta["style_tag"] == "blobs"
        assert "dataset_hash" in meta


def test_cli_help(runner):
    res = runner.invoke(main, ["--help"])
    assert res.exit_code == 0
    for cmd in ("plan", "generate", "train-expert", "train-gate", "eval",
                "serve"):
        assert cmd in res.output
