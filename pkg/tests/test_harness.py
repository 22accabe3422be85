import math

import pytest

from slicekit import harness
from slicekit.harness import (
    CSV_HEADER, HARNESS_FAILURE, ExperimentConfig, ResultRow, reference_config, plot_script, rows_from_csv, rows_to_csv,
    run_experiment, summarize,
)
from slicekit.instance import GenConfig


def small_config(**kw):
    # a node budget instead of the wall clock keeps stopped runs reproducible
    base = dict(service_counts=[1, 2], instances_per_point=3, time_limit=600.0, node_limit=1500,
                gen=GenConfig(num_nodes=6, num_links=14, num_clouds=2, num_layers=3, sfc_length=1))
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    cfg = small_config(out_dir=str(tmp_path_factory.mktemp("run")))
    return cfg, run_experiment(cfg)


def row(status="optimal", wall=1.0, feasible=True, rel=True, n=1, variant="milp"):
    return ResultRow("K1-000", 0, n, variant, status, 1.0, 1.0, 0.0, wall, feasible, rel)


def test_one_row_per_instance_and_variant(small_run):
    cfg, res = small_run
    assert len(res.rows) == 2 * 3 * 4
    keys = {(r.instance_id, r.variant) for r in res.rows}
    assert len(keys) == len(res.rows)
    assert not [r for r in res.rows if r.status == HARNESS_FAILURE]
    assert [r.instance_id for r in res.rows[:4]] == ["K1-000"] * 4
    assert [r.variant for r in res.rows[:4]] == cfg.variants


def test_files_written(small_run):
    cfg, res = small_run
    text = (res.out_dir / "results.csv").read_text()
    assert text.splitlines()[0] == CSV_HEADER
    assert len(text.splitlines()) == len(res.rows) + 1
    assert (res.out_dir / "summary.csv").exists()
    assert "summary.csv" in (res.out_dir / "plot.gp").read_text()


def test_summary_means_are_arithmetic(small_run):
    _, res = small_run
    for s in res.summary:
        grp = [r for r in res.rows if r.num_services == s.num_services and r.variant == s.variant]
        assert s.instances == len(grp)
        assert s.mean_wall_s == pytest.approx(sum(r.wall_s for r in grp) / len(grp), rel=1e-12)
        assert s.feasible + s.infeasible + s.no_incumbent == s.instances
        assert s.solved + s.unsolved == s.instances


def test_restriction_ordering_per_instance(small_run):
    _, res = small_run
    by = {(r.instance_id, r.variant): r for r in res.rows}
    for (iid, variant), r in by.items():
        if variant == "single_path" and r.feasible:
            assert by[(iid, "milp")].feasible
        if variant == "no_reliability" and r.counted_feasible and by[(iid, "milp")].solved:
            assert by[(iid, "milp")].feasible


def test_one_row_summary():
    s, = summarize([row(wall=2.5)])
    assert s.mean_wall_s == 2.5 and s.mean_wall_s_solved == 2.5
    assert (s.feasible, s.infeasible, s.no_incumbent) == (1, 0, 0)


@pytest.mark.parametrize("status, feasible, rel, counts", [
    ("optimal", True, True, (1, 0, 0)),
    ("infeasible", False, False, (0, 1, 0)),
    ("time_limit_no_incumbent", False, False, (0, 0, 1)),
    ("feasible_gap", True, True, (1, 0, 0)),
    # a no_reliability answer that breaks reliability does not count
    ("optimal", True, False, (0, 1, 0)),
])
def test_partition(status, feasible, rel, counts):
    s, = summarize([row(status, feasible=feasible, rel=rel)])
    assert (s.feasible, s.infeasible, s.no_incumbent) == counts


def test_solved_only_mean():
    s, = summarize([row(wall=1.0), row("feasible_gap", wall=60.0)])
    assert s.mean_wall_s == pytest.approx(30.5)
    assert s.mean_wall_s_solved == pytest.approx(1.0)
    s, = summarize([row("time_limit_no_incumbent", wall=60.0, feasible=False)])
    assert math.isnan(s.mean_wall_s_solved)


def test_empty_rows_raise():
    with pytest.raises(ValueError):
        summarize([])


def test_csv_round_trip(small_run):
    _, res = small_run
    back = rows_from_csv(rows_to_csv(res.rows))
    for a, b in zip(res.rows, back):
        assert a.csv_fields() == b.csv_fields()
    with pytest.raises(ValueError):
        rows_from_csv("a,b\n")


def stable(rows):
    return [(r.instance_id, r.seed, r.variant, r.status, r.objective, r.nodes) for r in rows]


def test_rerun_is_reproducible(small_run):
    cfg, res = small_run
    again = run_experiment(small_config(out_dir=cfg.out_dir), write=False)
    assert stable(again.rows) == stable(res.rows)


def test_worker_pool_matches_serial(small_run):
    cfg, res = small_run
    pooled = run_experiment(small_config(workers=2), write=False)
    assert stable(pooled.rows) == stable(res.rows)


def test_failures_are_isolated(monkeypatch):
    real = harness.solve_variant

    def flaky(inst, variant, *a, **kw):
        if variant == "minlp":
            raise RuntimeError("boom")
        return real(inst, variant, *a, **kw)

    monkeypatch.setattr(harness, "solve_variant", flaky)
    res = run_experiment(small_config(service_counts=[1], instances_per_point=2), write=False)
    bad = [r for r in res.rows if r.status == HARNESS_FAILURE]
    assert [r.variant for r in bad] == ["minlp", "minlp"]
    assert all("boom" in r.message for r in bad)
    assert len(res.rows) == 8


def test_validator_rejection_becomes_failure_row(monkeypatch):
    from slicekit import validator

    real = harness.validate

    def strict(inst, decoded, *a, **kw):
        rep = real(inst, decoded, *a, **kw)
        rep.families["delay"].record(1.0, "forced", 1e-6)
        return rep

    monkeypatch.setattr(harness, "validate", strict)
    res = run_experiment(small_config(service_counts=[1], instances_per_point=1, variants=["milp"]), write=False)
    r, = res.rows
    if not math.isnan(r.objective):
        assert r.status == HARNESS_FAILURE and "delay" in r.message
    assert validator.FAMILIES


@pytest.mark.parametrize("bad", [
    {"variants": []}, {"variants": ["nope"]}, {"instances_per_point": 0}, {"service_counts": [0]},
    {"workers": 0}, {"time_limit": -1.0},
])
def test_config_errors(bad):
    with pytest.raises(ValueError):
        small_config(**bad).validate()


def test_config_dict_round_trip():
    cfg = small_config()
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"bogus": 1})


def test_reference_config():
    cfg = reference_config()
    assert cfg.variants == ["milp", "minlp"]
    assert (cfg.time_limit, cfg.rel_gap) == (1800.0, 0.005)
    assert cfg.instances_per_point == 100 and cfg.service_counts == list(range(1, 11))
    assert cfg.gen.num_nodes == 112 and "external" in cfg.note
    cfg.validate()


def test_plot_script_mentions_every_variant():
    text = plot_script(["milp", "minlp"])
    assert text.count("plot ") == 2
    assert "'milp'" in text and "'minlp'" in text
    assert "set datafile separator ','" in text
