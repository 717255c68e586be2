import csv
import json

import numpy as np
import pytest

from strawberry.cli import main
from strawberry.harness import (
    TRACE_HEADER,
    ConfigError,
    aggregate,
    load_config,
    parse_config,
    run_experiment,
)


def bench_doc(tmp_path, **over):
    doc = {
        "objective": {"name": "rastrigin", "dimension": 2},
        "sba": {"n_mothers": 5, "d_root": 0.2, "d_runner": 2.5, "max_iterations": 20},
        "repetitions": 4,
        "base_seed": 10,
        "output": {
            "trace": str(tmp_path / "trace.csv"),
            "summary": str(tmp_path / "summary.json"),
            "per_run": str(tmp_path / "per_run.csv"),
            "extremes": str(tmp_path / "extremes.csv"),
        },
    }
    doc.update(over)
    return doc


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


# -- config -------------------------------------------------------------------


def test_parse_minimal():
    cfg = parse_config({"objective": {"name": "sphere", "dimension": 3}, "sba": {"n_mothers": 2, "d_root": 1, "d_runner": 2}})
    assert cfg.repetitions == 1 and cfg.base_seed == 0
    assert cfg.seed_for(4) == 4


@pytest.mark.parametrize(
    "mutate,field",
    [
        (lambda d: d["objective"].update(name="nosuchfn"), "objective.name"),
        (lambda d: d["objective"].update(dimension=0), "objective.dimension"),
        (lambda d: d["sba"].update(n_mothers=0), "sba.n_mothers"),
        (lambda d: d["sba"].update(d_root=-1), "sba.d_root"),
        (lambda d: d["sba"].pop("d_runner"), "sba.d_runner"),
        (lambda d: d["sba"].update(selection_pressure=3), "sba.selection_pressure"),
        (lambda d: d.update(repetitions=0), "repetitions"),
        (lambda d: d.update(base_seed=-2), "base_seed"),
        (lambda d: d.update(colour="red"), "colour"),
        (lambda d: d["output"].update(plots="x"), "output.plots"),
        (lambda d: d["objective"].update(bounds={"lower": 1, "upper": 0}), "objective.bounds"),
    ],
)
def test_invalid_config_names_field(tmp_path, mutate, field):
    doc = bench_doc(tmp_path)
    mutate(doc)
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert err.value.field == field


def test_objective_and_synthesis_exclusive(tmp_path):
    doc = bench_doc(tmp_path, synthesis={})
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_custom_bounds(tmp_path):
    doc = bench_doc(tmp_path)
    doc["objective"]["bounds"] = {"lower": [-1, -2], "upper": 1}
    _, bounds = parse_config(doc).build()
    np.testing.assert_array_equal(bounds.lower, [-1, -2])
    np.testing.assert_array_equal(bounds.upper, [1, 1])


def test_synthesis_config_fields():
    cfg = parse_config({
        "synthesis": {"lambda": 10.0, "grid": {"min": 1e-3, "max": 1e3, "points": 50}, "cost_form": "stacked",
                      "plant_num": 5, "plant_den": [1, 1]},
        "sba": {"n_mothers": 4, "d_root": 1e8, "d_runner": 1e10},
    })
    problem = cfg.synthesis.problem()
    assert problem.penalty == 10.0
    assert problem.frequency_grid.size == 50
    assert problem.cost_form == "stacked"
    np.testing.assert_array_equal(problem.plant.numerator, [5.0])


def test_vector_radii_in_config(tmp_path):
    doc = bench_doc(tmp_path)
    doc["sba"].update(d_root=[0.1, 0.3], d_runner=[1.0, 3.0])
    res = run_experiment(parse_config(doc))
    assert res.summary["config"]["sba"]["d_root"] == [0.1, 0.3]


# -- experiments ---------------------------------------------------------------


def test_single_repetition_aggregate_equals_run(tmp_path):
    res = run_experiment(parse_config(bench_doc(tmp_path, repetitions=1)))
    trace = res.runs[0].trace
    agg = res.aggregate
    for name, col in [("min", agg.min), ("mean", agg.mean), ("max", agg.max), ("incumbent", agg.incumbent), ("evaluations", agg.evaluations)]:
        np.testing.assert_array_equal(col, trace.column(name))


def test_trace_file_format(tmp_path):
    run_experiment(parse_config(bench_doc(tmp_path)))
    rows = read_csv(tmp_path / "trace.csv")
    assert tuple(rows[0]) == TRACE_HEADER
    assert len(rows) == 21
    assert [int(r[0]) for r in rows[1:]] == list(range(1, 21))
    for r in rows[1:]:
        for cell in r[1:]:
            assert float(cell) == float(format(float(cell), ".17g"))
    assert read_csv(tmp_path / "extremes.csv")[0] == ["iter", "min_across_runs", "max_across_runs"]


def test_aggregate_matches_per_run_dump(tmp_path):
    run_experiment(parse_config(bench_doc(tmp_path)))
    per_run = read_csv(tmp_path / "per_run.csv")
    header, body = per_run[0], per_run[1:]
    assert header == ["run", "seed"] + list(TRACE_HEADER)
    data = np.array([[float(c) for c in row] for row in body])
    assert sorted(set(data[:, 1].astype(int))) == [10, 11, 12, 13]
    trace = np.array([[float(c) for c in row] for row in read_csv(tmp_path / "trace.csv")[1:]])
    extremes = np.array([[float(c) for c in row] for row in read_csv(tmp_path / "extremes.csv")[1:]])
    for t in range(1, 21):
        rows = data[data[:, 2] == t]
        assert rows.shape[0] == 4
        np.testing.assert_allclose(trace[t - 1, 1:], rows[:, 3:].mean(axis=0), rtol=1e-15)
        assert extremes[t - 1, 1] == rows[:, 3].min()
        assert extremes[t - 1, 2] == rows[:, 5].max()


def test_summary_contents(tmp_path):
    res = run_experiment(parse_config(bench_doc(tmp_path)))
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["total_evaluations"] == 4 * 20 * 2 * 5
    assert len(s["final_values"]) == 4
    assert s["best_value"] == min(s["final_values"])
    assert s["median_final"] == pytest.approx(np.median(s["final_values"]))
    assert s["best_seed"] == 10 + s["best_run"]
    assert "wall_clock_seconds" not in s
    assert res.summary["best_position"] == s["best_position"]


def test_evaluation_accounting_with_multiplicity(tmp_path):
    doc = bench_doc(tmp_path, repetitions=3)
    doc["sba"].update(multiplicity=3, max_iterations=7)
    res = run_experiment(parse_config(doc))
    assert res.summary["total_evaluations"] == 3 * 7 * 2 * 3 * 5


def test_timing_opt_in(tmp_path):
    doc = bench_doc(tmp_path, repetitions=1)
    doc["output"]["timing"] = True
    run_experiment(parse_config(doc))
    assert json.loads((tmp_path / "summary.json").read_text())["wall_clock_seconds"] >= 0


def test_reproducible_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    run_experiment(parse_config(bench_doc(a)))
    run_experiment(parse_config(bench_doc(b)), workers=2)
    for name in ("trace.csv", "summary.json", "per_run.csv", "extremes.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_repetitions_are_seed_independent(tmp_path):
    res = run_experiment(parse_config(bench_doc(tmp_path)))
    firsts = {r.trace[0].min for r in res.runs}
    assert len(firsts) == 4
    # Rerunning repetition 2 alone with its derived seed reproduces it.
    doc = bench_doc(tmp_path, repetitions=1, base_seed=12)
    doc["output"] = {}
    alone = run_experiment(parse_config(doc)).runs[0]
    np.testing.assert_array_equal(alone.trace.column("incumbent"), res.runs[2].trace.column("incumbent"))


def test_early_stop_padding(tmp_path):
    doc = bench_doc(tmp_path, repetitions=3)
    doc["objective"]["name"] = "sphere"
    doc["sba"].update(max_iterations=400, target_value=1e-3)
    res = run_experiment(parse_config(doc))
    lengths = [len(r.trace) for r in res.runs]
    assert len(res.aggregate) == max(lengths)
    assert np.all(np.isfinite(res.aggregate.incumbent))
    assert res.summary["total_evaluations"] == sum(lengths) * 10


def test_unwritable_output_fails_before_compute(tmp_path):
    doc = bench_doc(tmp_path)
    doc["output"]["trace"] = str(tmp_path / "missing" / "trace.csv")
    with pytest.raises(OSError):
        run_experiment(parse_config(doc))
    assert not (tmp_path / "summary.json").exists()


def test_aggregate_is_plain_mean(tmp_path):
    res = run_experiment(parse_config(bench_doc(tmp_path)))
    agg = aggregate(res.runs)
    np.testing.assert_array_equal(agg.incumbent, np.mean([r.trace.column("incumbent") for r in res.runs], axis=0))


def test_synthesis_experiment_summary(tmp_path):
    doc = {
        "synthesis": {},
        "sba": {"n_mothers": 10, "d_root": 1e8, "d_runner": 1e10, "max_iterations": 5},
        "repetitions": 2,
        "output": {"summary": str(tmp_path / "s.json")},
    }
    run_experiment(parse_config(doc))
    s = json.loads((tmp_path / "s.json").read_text())
    assert set(s["controller"]) >= {"a0", "a1", "a2", "b0", "b1", "b2", "numerator", "denominator"}
    assert "gamma" in s and "g" in s
    assert s["controller"]["denominator"][0] == 1.0


# -- CLI ---------------------------------------------------------------------


def test_cli_benchmark_happy_path(tmp_path, capsys):
    code = main(["benchmark", "rastrigin", "--dim", "2", "--iters", "100", "--runs", "100", "--seed", "42",
                 "--out-dir", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "rastrigin2_trace.csv")
    assert len(rows) == 101
    s = json.loads((tmp_path / "rastrigin2_summary.json").read_text())
    assert s["total_evaluations"] == 100 * 100 * 10
    assert s["config"]["base_seed"] == 42
    assert "best value" in capsys.readouterr().out


def test_cli_unknown_objective(capsys, tmp_path):
    assert main(["benchmark", "nosuchfn", "--out-dir", str(tmp_path)]) == 1
    assert "nosuchfn" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["benchmark", "rastrigin", "--bogus-flag"]])
def test_cli_usage_errors(argv, capsys):
    assert main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_cli_optimize(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(bench_doc(tmp_path)))
    assert main(["optimize", str(path)]) == 0
    assert (tmp_path / "trace.csv").exists()


def test_cli_invalid_config_exit_1(tmp_path, capsys):
    doc = bench_doc(tmp_path)
    doc["sba"]["n_mothers"] = -3
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    assert main(["optimize", str(path)]) == 1
    assert "sba.n_mothers" in capsys.readouterr().err


def test_cli_bad_json_exit_1(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{not json")
    assert main(["optimize", str(path)]) == 1


def test_cli_zero_iterations_exit_1(tmp_path, capsys):
    doc = bench_doc(tmp_path)
    doc["sba"]["max_iterations"] = 0
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    assert main(["optimize", str(path)]) == 1
    assert "no iterations executed" in capsys.readouterr().err


def test_cli_unwritable_output_exit_2(tmp_path):
    assert main(["benchmark", "sphere", "--runs", "1", "--out-dir", str(tmp_path / "nope")]) == 2


def test_cli_synthesize(tmp_path, capsys):
    path = tmp_path / "synthesis.json"
    path.write_text(json.dumps({
        "synthesis": {"lambda": 1e5},
        "sba": {"n_mothers": 10},
        "output": {"summary": str(tmp_path / "s.json"), "trace": str(tmp_path / "t.csv")},
    }))
    assert main(["synthesize", str(path), "--restarts", "2", "--iters", "4"]) == 0
    s = json.loads((tmp_path / "s.json").read_text())
    assert s["config"]["repetitions"] == 2
    assert s["config"]["sba"]["d_runner"] == 1e10
    assert s["config"]["sba"]["d_root"] == 1e8
    out = capsys.readouterr().out
    assert "gamma" in out and "a0=" in out


def test_cli_synthesize_requires_block(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(bench_doc(tmp_path)))
    assert main(["synthesize", str(path)]) == 1


def test_load_config_roundtrip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(bench_doc(tmp_path)))
    cfg = load_config(path)
    assert cfg.repetitions == 4
    assert cfg.to_dict()["objective"] == {"name": "rastrigin", "dimension": 2}
