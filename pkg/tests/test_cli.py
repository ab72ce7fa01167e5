"""
Spec parsing, toy datasets and the command-line surface
"""

import json

import numpy as np
import pandas as pd
import pytest

from cli.datasets import load_csv, pinwheel, split_columns, toy_dataset
from cli.main import main
from cli.spec_parser import format_spec, load_spec, parse_spec
from core.errors import ConfigurationError, SpecParseError
from trainer.checkpoint import read_checkpoint
from trainer.metrics import read_metrics

SMALL_RUN = ["--minibatch", "8", "--particles-K", "8", "--data-size", "64", "--metrics-every", "1"]


def _parse_error(text):
    with pytest.raises(SpecParseError) as info:
        parse_spec(text, "test.model")
    return info.value


# ------------------------------------------------------------------
# SPEC PARSER
# ------------------------------------------------------------------
def test_parse_errors_carry_line_and_column():
    error = _parse_error("model m\n\nbogus x\n")
    assert (error.line, error.column) == (3, 1)
    assert str(error).startswith("test.model:3:1:")

    error = _parse_error("variable x\n  dims 2\nfactor x\n")
    assert (error.line, error.column) == (2, 3)

    error = _parse_error("variable x\n  dim two\nfactor x\n")
    assert (error.line, error.column) == (2, 7)


def test_unknown_parent_is_anchored_at_the_parent_list():
    error = _parse_error("variable x\n  role observed\nfactor x\n  parents ghost\n")
    assert error.line == 4
    assert error.column == 11


def test_missing_factor_and_duplicate_blocks():
    error = _parse_error("variable z\nvariable x\n  role observed\nfactor z\n")
    assert error.line == 2
    error = _parse_error("model a\nmodel b\n")
    assert error.line == 2
    assert "second 'model' block" in str(error)


def test_bad_choice_and_oracle():
    error = _parse_error("variable x\nfactor x\n  source spline\n")
    assert (error.line, error.column) == (3, 10)
    error = _parse_error("variable x\nfactor x\noracle bootstrap\n")
    assert error.line == 3


def test_format_round_trip_on_shipped_models(models_dir):
    for path in sorted(models_dir.glob("*.model")):
        spec = load_spec(path)
        text = format_spec(spec)
        again = parse_spec(text, str(path))
        assert format_spec(again) == text, path.name
        assert again.graph.topological_order == spec.graph.topological_order


def test_parsed_model_contents(lingauss_spec):
    spec = load_spec(lingauss_spec)
    assert spec.graph.name == "lingauss"
    assert spec.oracle.kind == "conjugate"
    assert spec.oracle.grid == (-2.0, -1.0, 0.0, 1.0, 2.0)
    assert spec.dataset.options == {"weight": "1.0", "noise_std": "0.5"}
    assert spec.graph.factor("x").spec.init[0] == ("weight", (1.0,))


def test_missing_spec_file(tmp_path):
    with pytest.raises(SpecParseError):
        load_spec(tmp_path / "absent.model")


# ------------------------------------------------------------------
# DATASETS
# ------------------------------------------------------------------
def test_pinwheel_shape_and_spread(rng):
    data = pinwheel(1000, rng)
    assert data.shape == (1000, 2)
    assert np.linalg.norm(data, axis=1).mean() == pytest.approx(1.2, abs=0.15)


def test_toy_dataset_is_fixed_across_calls(chain_spec):
    graph = load_spec(chain_spec).graph
    first = toy_dataset("pinwheel", graph, ["x"], {"arms": "3"}, 50)
    second = toy_dataset("pinwheel", graph, ["x"], {"arms": "3"}, 50)
    np.testing.assert_array_equal(first["x"], second["x"])
    with pytest.raises(ConfigurationError):
        toy_dataset("mnist", graph, ["x"])
    with pytest.raises(ConfigurationError):
        toy_dataset("pinwheel", graph, ["x"], {"arms": "many"})
    with pytest.raises(ConfigurationError):
        split_columns(graph, ["x"], np.zeros((4, 3)))


def test_load_csv_reads_indexed_columns_and_blanks(chain_spec, tmp_path):
    graph = load_spec(chain_spec).graph
    path = tmp_path / "data.csv"
    pd.DataFrame({"x_0": [1.0, 2.0], "x_1": [3.0, None]}).to_csv(path, index=False)
    data = load_csv(path, graph, ["x"])
    assert data["x"].shape == (2, 2)
    assert np.isnan(data["x"][1, 1])
    pd.DataFrame({"y": [1.0]}).to_csv(path, index=False)
    with pytest.raises(ConfigurationError):
        load_csv(path, graph, ["x"])


# ------------------------------------------------------------------
# COMMANDS
# ------------------------------------------------------------------
def test_graph_command_prints_the_inverse(chain_spec, capsys):
    assert main(["graph", "--spec", str(chain_spec)]) == 0
    out = capsys.readouterr().out
    assert "q(z1|x), q(z2|z1)" in out
    assert "d-separation check: ok" in out
    assert '"x" -> "z1" [style=dashed' in out


def test_graph_command_with_an_observed_override(chain_spec, tmp_path, capsys):
    dot = tmp_path / "chain.dot"
    assert main(["graph", "--spec", str(chain_spec), "--observed", "z1", "--dot", str(dot)]) == 0
    assert "observed z1" in capsys.readouterr().out
    assert dot.read_text().startswith('digraph "chain"')


def test_train_with_zero_iterations(lingauss_spec, tmp_path):
    out = tmp_path / "run"
    code = main(["train", "--spec", str(lingauss_spec), "--iters", "0", "--out", str(out), "--quiet",
                 "--data-size", "64"])
    assert code == 0
    state, metadata = read_checkpoint(out / "final.admp")
    assert state.step == 0
    assert metadata["config"]["iterations"] == 0
    assert read_metrics(out / "metrics.jsonl")[0]["header"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["variant"] == "admp-jsdloc"


def test_train_then_eval(lingauss_spec, tmp_path, capsys):
    out = tmp_path / "run"
    args = ["train", "--spec", str(lingauss_spec), "--iters", "2", "--out", str(out), "--quiet"] + SMALL_RUN
    assert main(args) == 0
    rows = [r for r in read_metrics(out / "metrics.jsonl") if not r.get("header")]
    assert [r["step"] for r in rows] == [1, 2]
    assert "kl_mean" in rows[-1]["oracle"]

    code = main(["eval", "--spec", str(lingauss_spec), "--checkpoint", str(out / "final.admp"),
                 "--samples", "200", "--data-size", "64"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["step"] == 2
    assert report["posterior"]["kind"] == "conjugate"
    assert len(report["posterior"]["rows"]) == 5
    assert (out / "posterior_plot.csv").is_file()
    assert (out / "samples.csv").is_file()


def test_manifest_repeats_a_run(lingauss_spec, tmp_path):
    first = tmp_path / "first"
    args = ["train", "--spec", str(lingauss_spec), "--iters", "2", "--out", str(first), "--quiet"] + SMALL_RUN
    assert main(args) == 0
    second = tmp_path / "second"
    assert main(["train", "--manifest", str(first / "manifest.json"), "--out", str(second), "--quiet"]) == 0
    a, _ = read_checkpoint(first / "final.admp")
    b, _ = read_checkpoint(second / "final.admp")
    for group in ("theta", "phi", "xi"):
        assert a.param_hash(group) == b.param_hash(group)


def test_resume_continues_to_the_new_budget(lingauss_spec, tmp_path):
    out = tmp_path / "run"
    args = ["train", "--spec", str(lingauss_spec), "--out", str(out), "--quiet"] + SMALL_RUN
    assert main(args + ["--iters", "2"]) == 0
    resumed = tmp_path / "resumed"
    assert main(args[:3] + ["--out", str(resumed), "--quiet", "--iters", "4",
                            "--resume", str(out / "final.admp")] + SMALL_RUN) == 0
    state, _ = read_checkpoint(resumed / "final.admp")
    assert state.step == 4
    rows = [r for r in read_metrics(resumed / "metrics.jsonl") if not r.get("header")]
    assert [r["step"] for r in rows] == [3, 4]


def test_unknown_variant_is_a_usage_error(lingauss_spec):
    with pytest.raises(SystemExit) as info:
        main(["train", "--spec", str(lingauss_spec), "--variant", "wasserstein"])
    assert info.value.code == 2


def test_bad_spec_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.model"
    path.write_text("variable x\n  dims 2\n")
    assert main(["graph", "--spec", str(path)]) == 2
    assert "bad.model:2:3" in capsys.readouterr().err


def test_eval_rejects_a_checkpoint_of_another_model(lingauss_spec, chain_spec, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--spec", str(lingauss_spec), "--iters", "0", "--out", str(out), "--quiet",
                 "--data-size", "64"]) == 0
    code = main(["eval", "--spec", str(chain_spec), "--checkpoint", str(out / "final.admp"), "--data-size", "64"])
    assert code == 2
    assert "offending parameters" in capsys.readouterr().err


def test_gradcheck_passes_and_catches_a_corrupted_gradient(lingauss_spec, capsys):
    assert main(["gradcheck", "--spec", str(lingauss_spec)]) == 0
    out = capsys.readouterr().out
    assert out.count("pass") == 3
    assert main(["gradcheck", "--spec", str(lingauss_spec), "--corrupt-group", "theta"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_gradcheck_for_gan_has_no_inference_group(lingauss_spec, capsys):
    assert main(["gradcheck", "--spec", str(lingauss_spec), "--variant", "gan"]) == 0
    lines = capsys.readouterr().out.splitlines()
    phi = next(line for line in lines if line.strip().startswith("phi"))
    assert "n/a" in phi


def test_compare_marks_incompatible_variants_skipped(discrete_spec, tmp_path):
    out = tmp_path / "compare"
    code = main(["compare", "--spec", str(discrete_spec), "--variants", "gan,admp-jsdloc", "--seeds", "0,1",
                 "--iters", "2", "--out", str(out)] + SMALL_RUN)
    assert code == 0
    table = pd.read_csv(out / "compare.csv")
    assert list(table["variant"]) == ["gan", "gan", "admp-jsdloc", "admp-jsdloc"]
    assert list(table["seed"]) == [0, 1, 0, 1]
    assert list(table["status"]) == ["ok", "ok", "skipped", "skipped"]
