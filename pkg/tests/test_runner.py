import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedcascade.agent import AlgorithmParams
from fedcascade.environment import SyntheticConfig
from fedcascade.runner import (COMMENT, HEADER, METRICS, AggregateSeries, ExperimentConfig,
                               SchemaError, aggregate, format_csv, read_csv, run_experiment,
                               write_csv)


def tiny(num_runs=1, base_seed=0, **kw):
    env = SyntheticConfig(num_users=4, num_clusters=2, dim=3, items_per_round=8, K=2, horizon=120)
    params = AlgorithmParams(4, 3, 2, 120, beta=0.5, lam=3.0)
    kw.setdefault("snapshot_interval", 40)
    return ExperimentConfig(env, params, num_runs=num_runs, base_seed=base_seed, **kw)


def test_config_validation():
    with pytest.raises(ValueError):
        tiny(num_runs=0)
    with pytest.raises(ValueError):
        tiny(snapshot_interval=0)


def test_single_run_has_zero_stddev():
    s = run_experiment(tiny())
    for m in METRICS:
        assert [r for r, _, _ in s.rows[m]] == [40, 80, 120]
        assert all(sd == 0.0 for _, _, sd in s.rows[m])


def test_population_stddev_example():
    per_run = [{m: [v] for m in METRICS} for v in (10.0, 12.0, 14.0)]
    s = aggregate(per_run, [5])
    _, mean, sd = s.rows["cum_regret"][0]
    assert mean == 12.0 and sd == pytest.approx(math.sqrt(8 / 3))


@given(st.permutations([3.0, 1.5, 9.25, 4.0]))
def test_aggregation_order_invariant(vals):
    ref = aggregate([{m: [v] for m in METRICS} for v in (3.0, 1.5, 9.25, 4.0)], [1])
    got = aggregate([{m: [v] for m in METRICS} for v in vals], [1])
    assert got.rows["cum_regret"][0][1] == pytest.approx(ref.rows["cum_regret"][0][1])
    assert got.rows["cum_regret"][0][2] == pytest.approx(ref.rows["cum_regret"][0][2])


def test_csv_round_trip_and_byte_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    s1 = run_experiment(tiny(num_runs=2, output_path=str(a)))
    run_experiment(tiny(num_runs=2, output_path=str(b)))
    assert a.read_bytes() == b.read_bytes()
    assert read_csv(a) == s1
    lines = a.read_text().splitlines()
    assert lines[0] == COMMENT and lines[1] == ",".join(HEADER)
    assert [ln.split(",")[0] for ln in lines[2:]] == [m for m in METRICS for _ in range(3)]
    assert a.read_bytes().endswith(b"\n") and b"\r" not in a.read_bytes()


def test_parallel_matches_sequential():
    assert run_experiment(tiny(num_runs=2), jobs=2) == run_experiment(tiny(num_runs=2))


def test_seed_changes_output():
    assert format_csv(run_experiment(tiny(base_seed=0))) != format_csv(run_experiment(tiny(base_seed=1)))


def test_empty_series_is_header_only(tmp_path):
    p = tmp_path / "e.csv"
    write_csv(AggregateSeries(), p)
    assert p.read_text() == COMMENT + "\n" + ",".join(HEADER) + "\n"
    assert read_csv(p) == AggregateSeries()


def test_shortest_round_trip_floats(tmp_path):
    s = AggregateSeries()
    s.rows["cum_regret"] = [(7, 0.1 + 0.2, 1 / 3)]
    p = tmp_path / "f.csv"
    write_csv(s, p)
    assert "0.30000000000000004,0.3333333333333333" in p.read_text()
    assert read_csv(p) == s


def test_schema_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n")
    with pytest.raises(SchemaError):
        read_csv(bad)
    bad.write_text("metric,round,mean,stddev\nregret,1,2,3\n")
    with pytest.raises(SchemaError):
        read_csv(bad)
    bad.write_text("metric,round,mean,stddev\ncum_regret,x,2,3\n")
    with pytest.raises(SchemaError):
        read_csv(bad)
    bad.write_text("")
    with pytest.raises(SchemaError):
        read_csv(bad)
