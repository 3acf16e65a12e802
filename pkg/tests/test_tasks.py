import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from metafed.errors import ConfigError
from metafed.tasks import (TaskFamily, class_means, client_task, export_clients,
                           holdout_new_task, import_clients, partition_clients, pool,
                           read_jsonl, sample_task, write_jsonl)

SINE = TaskFamily("sine-regression", 1, 1, 1.0, 0.0)
LINEAR = TaskFamily("shifted-linear-regression", 3, 2, 0.5, 0.1)
CLASSES = TaskFamily("gaussian-class-clusters", 2, 4, 1.0, 0.5)


@pytest.mark.parametrize("family", [SINE, LINEAR, CLASSES])
def test_sample_task_is_deterministic(family):
    a, b = sample_task(family, 42), sample_task(family, 42)
    assert a.id == b.id == "train-42"
    assert np.array_equal(a.support.inputs, b.support.inputs)
    assert np.array_equal(a.query.targets, b.query.targets)
    c = sample_task(family, 43)
    assert not np.array_equal(a.support.inputs, c.support.inputs)


def test_support_and_query_sizes():
    t = sample_task(LINEAR, 0, n_support=7, n_query=13)
    assert len(t.support) == 7 and len(t.query) == 13
    with pytest.raises(ConfigError):
        sample_task(LINEAR, 0, n_support=0)


def test_zero_spread_tasks_share_the_generator():
    fam = TaskFamily("sine-regression", 1, 1, 0.0, 0.0)
    p = [sample_task(fam, s).generator_params for s in range(5)]
    assert all(q == p[0] for q in p)
    assert p[0]["amplitude"] == pytest.approx(2.55)
    assert p[0]["phase"] == pytest.approx(np.pi / 2)


def test_sine_amplitude_centered_on_range_midpoint():
    amps = np.array([sample_task(SINE, s, 1, 1).generator_params["amplitude"]
                     for s in range(10_000)])
    assert abs(amps.mean() - 2.55) <= 0.02 * 2.55
    assert amps.min() >= 0.1 and amps.max() <= 5.0


def test_sine_targets_follow_generator():
    t = sample_task(SINE, 9)
    a, ph = t.generator_params["amplitude"], t.generator_params["phase"]
    np.testing.assert_allclose(t.query.targets[:, 0], a * np.sin(t.query.inputs[:, 0] + ph),
                               atol=1e-12)


def test_dirichlet_large_concentration_is_iid():
    fam = TaskFamily("gaussian-class-clusters", 2, 5, 1e6, 0.5)
    clients = partition_clients(fam, 10, 200, seed=1)
    for c in clients:
        share = np.bincount(c.data.targets, minlength=5) / c.n_k
        assert np.max(np.abs(share - 0.2)) <= 0.05


def test_dirichlet_small_concentration_is_skewed():
    fam = TaskFamily("gaussian-class-clusters", 2, 5, 0.1, 0.5)
    top = [np.max(np.bincount(c.data.targets, minlength=5)) / c.n_k
           for s in range(50) for c in partition_clients(fam, 1, 100, seed=s)]
    assert np.mean(top) >= 0.5


def test_class_means_fixed_by_world_seed():
    np.testing.assert_array_equal(class_means(CLASSES), class_means(CLASSES))
    other = TaskFamily("gaussian-class-clusters", 2, 4, 1.0, 0.5, world_seed=1)
    assert not np.array_equal(class_means(CLASSES), class_means(other))


def test_holdout_stream_is_disjoint():
    train = {sample_task(LINEAR, s).id for s in range(100)}
    held = {holdout_new_task(LINEAR, s).id for s in range(100)}
    assert not train & held
    a, b = sample_task(LINEAR, 5), holdout_new_task(LINEAR, 5)
    assert not np.array_equal(a.support.inputs, b.support.inputs)


def test_holdout_tasks_share_the_training_distribution():
    fam = TaskFamily("shifted-linear-regression", 1, 1, 1.0, 0.0)
    train = [sample_task(fam, s, 1, 1).generator_params["intercept"][0] for s in range(1000)]
    held = [holdout_new_task(fam, s, 1, 1).generator_params["intercept"][0] for s in range(1000)]
    assert stats.ks_2samp(train, held).pvalue > 0.01


@settings(max_examples=30, deadline=None)
@given(K=st.integers(1, 12), lo=st.integers(1, 20), extra=st.integers(0, 30),
       seed=st.integers(0, 2**31))
def test_partition_sizes(K, lo, extra, seed):
    clients = partition_clients(LINEAR, K, (lo, lo + extra), seed)
    assert len(clients) == K
    assert [c.client_id for c in clients] == list(range(K))
    assert all(lo <= c.n_k <= lo + extra for c in clients)
    assert pool(clients).n_k == sum(c.n_k for c in clients)


def test_partition_is_deterministic():
    a = partition_clients(CLASSES, 4, (5, 15), seed=3)
    b = partition_clients(CLASSES, 4, (5, 15), seed=3)
    for x, y in zip(a, b):
        assert np.array_equal(x.data.inputs, y.data.inputs)
        assert np.array_equal(x.data.targets, y.data.targets)


def test_heterogeneity_increases_client_spread():
    spreads = []
    for s in (0.0, 0.25, 1.0):
        fam = TaskFamily("shifted-linear-regression", 2, 1, s, 0.0)
        slopes = np.array([c.generator_params["slope"].ravel()
                           for c in partition_clients(fam, 50, 5, seed=0)])
        spreads.append(slopes.std(axis=0).mean())
    assert spreads[0] == 0.0
    assert spreads[0] < spreads[1] < spreads[2]


def test_quality_weights():
    clients = partition_clients(LINEAR, 3, 4, 0, quality_weights=[1.0, 2.0, 0.5])
    assert [c.quality_weight for c in clients] == [1.0, 2.0, 0.5]
    with pytest.raises(ConfigError):
        partition_clients(LINEAR, 3, 4, 0, quality_weights=[1.0])


@pytest.mark.parametrize("kwargs", [dict(K=0, per_client_n=5), dict(K=2, per_client_n=0),
                                    dict(K=2, per_client_n=(5, 2))])
def test_partition_rejects_bad_sizes(kwargs):
    with pytest.raises(ConfigError):
        partition_clients(LINEAR, seed=0, **kwargs)


@pytest.mark.parametrize("kwargs", [
    dict(kind="mnist"), dict(heterogeneity=-1.0), dict(noise_std=-0.1),
    dict(kind="sine-regression", input_dim=2),
    dict(kind="gaussian-class-clusters", output_dim=1, input_dim=2),
    dict(kind="gaussian-class-clusters", output_dim=3, heterogeneity=0.0),
])
def test_family_validation(kwargs):
    with pytest.raises(ConfigError):
        TaskFamily(**kwargs)


def test_client_task_split():
    c = partition_clients(LINEAR, 1, 9, 0)[0]
    t = client_task(c)
    assert len(t.support) + len(t.query) == 9
    assert np.array_equal(t.support.inputs, c.data.inputs[:len(t.support)])


@pytest.mark.parametrize("family", [LINEAR, CLASSES])
def test_jsonl_round_trip(family, tmp_path):
    batch = sample_task(family, 1).support
    write_jsonl(batch, tmp_path / "d.jsonl")
    back = read_jsonl(tmp_path / "d.jsonl")
    assert np.array_equal(back.inputs, batch.inputs)
    assert np.array_equal(back.targets, batch.targets)
    assert back.has_class_labels == batch.has_class_labels


def test_export_import_clients(tmp_path):
    clients = partition_clients(CLASSES, 3, (4, 8), 2)
    export_clients(clients, tmp_path)
    back = import_clients(tmp_path)
    assert [c.client_id for c in back] == [0, 1, 2]
    for a, b in zip(clients, back):
        assert np.array_equal(a.data.inputs, b.data.inputs)


def test_single_client_partition_holds_the_whole_draw():
    (only,) = partition_clients(LINEAR, 1, 37, 4)
    assert only.n_k == 37 and pool([only]).n_k == 37
