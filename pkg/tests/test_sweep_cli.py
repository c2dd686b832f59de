import csv
import json

import numpy as np
import pytest

from vbgpcm import ModelId
from vbgpcm.cli import main
from vbgpcm.simulate import with_known_fraction
from vbgpcm.sweep import (EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_OK, SUMMARY_COLUMNS, RunConfig,
                          cell_seed, run_sweep, summarize)


def test_single_run_writes_one_line(tmp_path, sim1):
    res = run_sweep(RunConfig(sim1, models=["VII"], restarts=1, G_max=5, output_dir=tmp_path))
    lines = (tmp_path / "runs.jsonl").read_text().splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0])["model"] == "VII"
    with open(tmp_path / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0].keys()) == SUMMARY_COLUMNS
    assert res.exit_code == EXIT_OK


def test_summary_is_pure_function_of_runs(tmp_path, sim1):
    res = run_sweep(RunConfig(sim1, models=["EII", "VII"], restarts=2, G_max=5,
                              output_dir=tmp_path))
    runs = [json.loads(l) for l in (tmp_path / "runs.jsonl").read_text().splitlines()]
    assert summarize(runs) == res.summary
    by_model = {r["model"]: r for r in res.summary}
    assert by_model["VII"]["dic_min"] == min(r["dic"] for r in runs if r["model"] == "VII")


def test_classification_adds_misclassification(sim1):
    data = with_known_fraction(sim1, 0.5, seed=1)
    res = run_sweep(RunConfig(data, models=["VII"], restarts=1, G_max=3,
                              strategy="provided-labels", classify=True))
    assert "misclassification_pct" in res.summary[0]
    assert 0 <= res.runs[0]["misclassification_pct"] <= 100


def test_unconverged_sweep_exit_code(sim1):
    from vbgpcm import ConvergenceConfig
    res = run_sweep(RunConfig(sim1, models=["EII"], restarts=1, G_max=8,
                              conv=ConvergenceConfig(max_iters=3)))
    assert res.exit_code == EXIT_NOT_CONVERGED


def test_run_config_validation(sim1):
    with pytest.raises(ValueError):
        RunConfig(sim1, restarts=0)
    with pytest.raises(ValueError):
        RunConfig(sim1, classify=True)


def test_cell_seeds_are_distinct():
    seeds = {cell_seed(0, m, r) for m in ModelId for r in range(10)}
    assert len(seeds) == 120
    assert cell_seed(1, ModelId.EII, 0) != cell_seed(0, ModelId.EII, 0)


def test_cli_end_to_end(tmp_path, capsys):
    data = tmp_path / "sim1.csv"
    assert main(["simulate", "sim1", "--out", str(data)]) == EXIT_OK
    out = tmp_path / "out"
    code = main(["sweep", "--input", str(data), "--models", "EII,VII", "--restarts", "2",
                 "--G-max", "6", "--output-dir", str(out)])
    assert code == EXIT_OK
    printed = capsys.readouterr().out
    assert "VII" in printed and "dic_min" in printed
    assert len((out / "runs.jsonl").read_text().splitlines()) == 4


def test_cli_fit_and_classify(tmp_path, capsys):
    assert main(["fit", "--design", "sim1", "--model", "VII", "--output-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "fit_VII.json").read_text())["model"] == "VII"
    code = main(["classify", "--design", "sim1", "--models", "VII", "--restarts", "1",
                 "--known-fraction", "0.5"])
    assert code == EXIT_OK
    assert "misclassification_pct" in capsys.readouterr().out


def test_cli_config_overrides_flags(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("restarts = 1\nmodels = VII\nalpha0 = 0.1\n")
    out = tmp_path / "o"
    assert main(["sweep", "--design", "sim1", "--config", str(cfg), "--output-dir", str(out)]) == 0
    rows = [json.loads(l) for l in (out / "runs.jsonl").read_text().splitlines()]
    assert [r["model"] for r in rows] == ["VII"]


def test_cli_input_errors(tmp_path, capsys):
    assert main(["fit", "--input", str(tmp_path / "missing.csv"), "--model", "VII"]) == EXIT_INPUT
    assert main(["sweep", "--design", "sim1", "--models", "EVE", "--restarts", "1"]) == EXIT_INPUT
    assert main(["classify", "--design", "sim1", "--models", "VII"]) == EXIT_INPUT
    err = capsys.readouterr().err
    assert "EVE" in err
