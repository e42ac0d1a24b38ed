import numpy as np
import pytest

from relayfl.errors import ConfigError
from relayfl.fedsim import (Dataset, FlConfig, RoundPlan, TaskSpec, estimate_heterogeneity,
                            global_aggregate, gradient, load_model, local_train, loss,
                            make_noniid_data, nmse, relay_aggregate, run_fl, save_model,
                            weighted_average, zero_model)

SMALL_TASK = TaskSpec(n_classes=4, n_features=6, test_size=200)


def _small_cfg(**kw):
    base = dict(rounds=6, n_sns=8, dataset_size_range=(40, 80), task=SMALL_TASK, lr=0.05,
                labels_per_sn=2, seed=3)
    base.update(kw)
    return FlConfig(**base)


# -- aggregation -------------------------------------------------------------------

def test_relay_aggregate_examples():
    out = relay_aggregate([np.array([0.0])], [1.0], np.array([1.0]), 3.0)
    assert out == pytest.approx([0.75])
    with pytest.raises(ValueError):
        relay_aggregate([np.array([0.0])], [1.0], np.array([1.0]), 0.0)
    m = np.array([1.5, -2.0, 3.0])
    assert np.array_equal(relay_aggregate([m, m], [2, 5], m, 7), m)
    assert np.array_equal(weighted_average([m], [4.0]), m)


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        weighted_average([np.zeros(2), np.zeros(3)], [1, 1])


def test_weights_sum_to_one(rng):
    sizes = rng.uniform(1, 10, 5)
    eye = np.eye(5)
    w = weighted_average(list(eye), sizes)
    assert abs(w.sum() - 1) < 1e-12
    assert np.allclose(w, sizes / sizes.sum(), atol=1e-15)


def test_global_aggregate_reductions(rng):
    models = [rng.standard_normal(4) for _ in range(3)]
    sizes = [200.0, 300.0, 250.0]
    assert np.allclose(global_aggregate(models, sizes), weighted_average(models, sizes))
    relay = relay_aggregate(models[1:], sizes[1:], models[0], sizes[0])
    assert np.array_equal(global_aggregate([], [], [relay], [sum(sizes)]), relay)


def test_hierarchical_identity_random_partitions(rng):
    for _ in range(50):
        n, dim = 20, int(rng.integers(1, 10_000))
        models = rng.standard_normal((n, dim))
        sizes = rng.integers(200, 401, n).astype(float)
        flat = weighted_average(list(models), sizes)
        labels = rng.integers(-1, 4, n)  # -1 direct, otherwise a relay group
        direct = [i for i in range(n) if labels[i] == -1]
        rel_models, rel_sizes = [], []
        for grp in range(4):
            members = [i for i in range(n) if labels[i] == grp]
            if not members:
                continue
            head, rest = members[0], members[1:]
            rel_models.append(relay_aggregate(models[rest], sizes[rest], models[head],
                                              sizes[head]))
            rel_sizes.append(sizes[members].sum())
        if not direct and not rel_models:
            continue
        out = global_aggregate(models[direct], sizes[direct], rel_models, rel_sizes)
        assert np.max(np.abs(out - flat)) <= 1e-12


# -- data --------------------------------------------------------------------------

def test_noniid_label_support_and_sizes():
    data = make_noniid_data(30, TaskSpec(), 2, (200, 400), seed=1)
    for c in data.clients:
        assert np.count_nonzero(c.label_histogram(10)) == 2
        assert 200 <= len(c) <= 400
    iid = make_noniid_data(5, TaskSpec(), 10, (200, 400), seed=1)
    assert all(np.count_nonzero(c.label_histogram(10)) == 10 for c in iid.clients)
    again = make_noniid_data(30, TaskSpec(), 2, (200, 400), seed=1)
    assert np.array_equal(again.clients[7].x, data.clients[7].x)


def test_noniid_rejects_bad_support():
    with pytest.raises(ConfigError):
        make_noniid_data(3, TaskSpec(), 11)


def test_heterogeneity_larger_for_fewer_labels():
    task = TaskSpec(n_classes=10, n_features=8, test_size=100)
    skew = estimate_heterogeneity(make_noniid_data(6, task, 2, (60, 80), 0), 1e-2)
    iid = estimate_heterogeneity(make_noniid_data(6, task, 10, (60, 80), 0), 1e-2)
    assert skew.gamma > iid.gamma >= -1e-9


# -- local training ----------------------------------------------------------------

def _one_sample():
    return Dataset(np.array([[0.5, -1.0, 2.0]]), np.array([1]))


def test_zero_lr_leaves_model_unchanged(rng):
    data = make_noniid_data(1, SMALL_TASK, 2, (30, 30), 0).clients[0]
    w = rng.standard_normal((6 + 1) * 4)
    out = local_train(w, data, 3, 0.0, 8, np.random.default_rng(0), 4, 0.1)
    assert np.array_equal(out, w)


def test_single_step_equals_hand_gradient(rng):
    data = _one_sample()
    w = rng.standard_normal(4 * 3)
    # analytic softmax gradient: x~ (p - onehot)^T plus ridge term
    xa = np.array([0.5, -1.0, 2.0, 1.0])
    logits = xa @ w.reshape(4, 3)
    p = np.exp(logits - logits.max())
    p /= p.sum()
    p[1] -= 1
    g = np.outer(xa, p).ravel() + 0.2 * w
    assert np.allclose(gradient(w, data, 3, 0.2), g, atol=1e-14)
    out = local_train(w, data, 1, 0.1, 1, np.random.default_rng(0), 3, 0.2)
    assert np.allclose(out, w - 0.1 * g, atol=1e-14)


def test_training_descends():
    data = make_noniid_data(1, SMALL_TASK, 4, (200, 200), 2).clients[0]
    w = zero_model(6, 4)
    out = local_train(w, data, 3, 0.01, 32, np.random.default_rng(0), 4, 1e-3)
    assert loss(out, data, 4, 1e-3) < loss(w, data, 4, 1e-3)


def test_local_train_rejects_empty():
    with pytest.raises(ValueError):
        local_train(np.zeros(4), Dataset(np.zeros((0, 1)), np.zeros(0, int)), 1, 0.1, 1,
                    np.random.default_rng(0), 2)


# -- runner ------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError):
        FlConfig(lr=0.0)
    with pytest.raises(ConfigError):
        FlConfig(local_epochs=0)
    with pytest.raises(ConfigError):
        FlConfig(scheme="gossip")
    with pytest.raises(ConfigError):
        FlConfig.from_dict({"epochs": 3})


def test_non_ideal_needs_plans():
    with pytest.raises(ConfigError):
        run_fl(_small_cfg(scheme="cooperative"))


def test_cooperative_all_one_hop_equals_one_hop():
    plans = [RoundPlan(one_hop=(0, 2, 3, 5))] * 6
    a = run_fl(_small_cfg(scheme="cooperative"), plans)
    b = run_fl(_small_cfg(scheme="one_hop"), plans)
    assert np.array_equal(a.final_model, b.final_model)
    assert a.loss == b.loss and a.accuracy == b.accuracy


def test_empty_round_keeps_model():
    plans = [RoundPlan(one_hop=(0, 1))] * 3 + [RoundPlan()] * 3
    cfg = _small_cfg(scheme="one_hop")
    h = run_fl(cfg, plans)
    assert h.loss[3:] == [h.loss[2]] * 3
    assert h.participants == [2, 2, 2, 0, 0, 0]
    short = run_fl(cfg.replace(rounds=3), plans[:3])
    assert np.array_equal(short.final_model, h.final_model)


def test_relay_routing_matches_flat_average():
    plan = RoundPlan(one_hop=(0,), two_hop={1: 2, 3: 2}, relays=(2,))
    flat = RoundPlan(one_hop=(0, 1, 2, 3))
    a = run_fl(_small_cfg(scheme="cooperative", rounds=2), [plan] * 2)
    b = run_fl(_small_cfg(scheme="one_hop", rounds=2), [flat] * 2)
    # same local models, hierarchical identity makes the globals agree
    assert np.allclose(a.final_model, b.final_model, atol=1e-12, rtol=0)


def test_unknown_relay_in_plan_rejected():
    with pytest.raises(ValueError):
        run_fl(_small_cfg(scheme="cooperative", rounds=1),
               [RoundPlan(one_hop=(0,), two_hop={1: 5}, relays=())])


def test_run_is_deterministic():
    a = run_fl(_small_cfg(clients_per_round=4))
    b = run_fl(_small_cfg(clients_per_round=4))
    assert np.array_equal(a.final_model, b.final_model) and a.loss == b.loss


def test_ideal_loss_monotone_after_round_five():
    h = run_fl(FlConfig(rounds=40, n_sns=20, seed=0))
    smooth = np.convolve(h.loss, np.ones(3) / 3, mode="valid")
    assert np.all(np.diff(smooth[5:]) <= 1e-3)
    assert h.loss[-1] < h.loss[0]


def test_more_participants_lower_final_loss():
    cfg = _small_cfg(scheme="one_hop", rounds=15, n_sns=12)
    few = run_fl(cfg, [RoundPlan(one_hop=(0, 1, 2))] * 15)
    many = run_fl(cfg, [RoundPlan.everyone(12)] * 15)
    assert many.loss[-1] <= few.loss[-1]


# -- nmse and exports --------------------------------------------------------------

def test_nmse_examples():
    assert nmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert nmse([1.0, 1.0], [0.0, 0.0]) == pytest.approx(1.0)
    assert nmse([2.0, 2.0], [0.0, 0.0]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        nmse([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        nmse([0.0, 0.0], [1.0, 1.0])


def test_model_dump_roundtrip(tmp_path, rng):
    w = rng.standard_normal(17)
    path = tmp_path / "m.bin"
    save_model(path, w)
    raw = path.read_bytes()
    assert len(raw) == 8 + 8 * 17 and int.from_bytes(raw[:8], "little") == 17
    assert np.array_equal(load_model(path), w)
    path.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        load_model(path)


def test_history_csv(tmp_path):
    h = run_fl(_small_cfg(rounds=3))
    path = tmp_path / "h.csv"
    h.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "round,scheme,loss,accuracy,participants"
    assert len(lines) == 4 and lines[1].startswith("0,ideal,")
