import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pelate.data import (
    Dataset,
    SeedSpec,
    derive_seed,
    load_csv,
    positivity_violations,
    split_groups,
    write_csv,
)
from pelate.errors import DegenerateDesignError, ParseError


def test_load_csv_minimal(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("t,y,x1\n1,2.0,0.5\n0,1.0,-0.5\n")
    d = load_csv(p)
    assert (d.n, d.d, d.n1, d.n0) == (2, 1, 1, 1)
    assert d.y[0] == 2.0 and d.x[1, 0] == -0.5


def test_load_csv_rejects_bad_treatment(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("t,y,x1\n1,2.0,0.5\n2,1.0,-0.5\n")
    with pytest.raises(ParseError, match="treatment must be 0 or 1 at row 3"):
        load_csv(p)


@pytest.mark.parametrize(
    "body,match",
    [
        ("t,x1,y\n1,1,1\n", "malformed header"),
        ("t,y\n1,1\n", "malformed header"),
        ("t,y,x1\n1,abc,0.5\n", "non-numeric cell at row 2"),
        ("t,y,x1\n1,inf,0.5\n", "non-finite value at row 2"),
        ("t,y,x1\n1,1.0\n", "wrong number of cells at row 2"),
    ],
)
def test_load_csv_parse_errors(tmp_path, body, match):
    p = tmp_path / "d.csv"
    p.write_text(body)
    with pytest.raises(ParseError, match=match):
        load_csv(p)


def test_csv_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    d = Dataset(x=rng.standard_normal((50, 3)), t=(rng.random(50) < 0.4).astype(int),
                y=rng.standard_normal(50) * 1e3)
    p = tmp_path / "rt.csv"
    write_csv(d, p)
    back = load_csv(p)
    assert np.array_equal(back.x, d.x)
    assert np.array_equal(back.t, d.t)
    assert np.array_equal(back.y, d.y)


def test_dataset_rejects_nonfinite_and_bad_flags():
    with pytest.raises(DegenerateDesignError):
        Dataset(x=np.array([[np.nan]]), t=np.array([1]), y=np.array([1.0]))
    with pytest.raises(DegenerateDesignError):
        Dataset(x=np.array([[1.0], [1.0]]), t=np.array([1, 2]), y=np.array([1.0, 2.0]))


def test_dataset_immutable():
    d = Dataset(x=np.eye(2), t=np.array([0, 1]), y=np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        d.y[0] = 5.0


def test_split_groups_membership():
    d = Dataset(x=np.zeros((4, 1)), t=np.array([1, 0, 1, 0]), y=np.arange(4.0))
    treated, control = split_groups(d)
    assert treated.indices.tolist() == [0, 2]
    assert control.indices.tolist() == [1, 3]
    assert treated.arm == 1 and control.arm == 0


def test_split_groups_empty_arm():
    d = Dataset(x=np.zeros((3, 1)), t=np.array([1, 1, 1]), y=np.arange(3.0))
    with pytest.raises(DegenerateDesignError, match="one arm empty"):
        split_groups(d)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=2, max_size=100))
def test_split_groups_partitions(flags):
    t = np.array(flags)
    d = Dataset(x=np.zeros((len(flags), 1)), t=t, y=np.zeros(len(flags)))
    if t.sum() in (0, len(flags)):
        with pytest.raises(DegenerateDesignError):
            split_groups(d)
        return
    treated, control = split_groups(d)
    assert len(treated) + len(control) == d.n
    assert d.n1 + d.n0 == d.n
    union = np.concatenate([treated.indices, control.indices])
    assert sorted(union.tolist()) == list(range(d.n))
    assert not set(treated.indices) & set(control.indices)


def test_derive_seed_deterministic():
    assert derive_seed(123, 45) == derive_seed(123, 45)
    assert SeedSpec(master=123, stream=45).child_seed() == derive_seed(123, 45)


def test_derive_seed_distinct_streams():
    seeds = {derive_seed(987654321, s) for s in range(100_000)}
    assert len(seeds) == 100_000


def test_derive_seed_distinct_masters():
    stream = 7
    seeds = {derive_seed(m, stream) for m in range(1000)}
    assert len(seeds) == 1000


def test_derive_seed_in_64_bit_range():
    for s in (0, 1, 2**63, 2**64 - 1):
        assert 0 <= derive_seed(s, s) < 2**64


def test_positivity_violation_count():
    tau = np.array([0.005, 0.02, 0.5, 0.995, 0.989])
    assert positivity_violations(tau) == 2
    assert positivity_violations(tau, eps_tau=0.001) == 0
    assert positivity_violations(tau, eps_tau=0.05) == 4
