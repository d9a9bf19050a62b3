"""Tests for the training loop, paradigm equivalences, and offline replay.

The loop's central promise is that paradigms differ only in which questions
train: identical RNG streams per (seed, question, epoch) make the warmup
phase of trajectory matching bit-identical to the supervised baseline, and
make a gamma=0 matcher bit-identical to naive semi-supervision.  These
equivalences are asserted with exact array equality, not tolerances.
"""

import copy
import math
import os

import numpy as np
import pytest

from trajrl.core import ConfigError, TrainerConfig
from trajrl.harness import (
    OfflineSelection,
    TrainState,
    greedy_accuracy,
    offline_select,
    run,
    sweep,
    train_epoch,
)
from trajrl.logio import LogParseError, read_passrates
from trajrl.sim import WorldConfig, generate_world, init_policy
from trajrl.trajectory import ReliableDatabase, TrajectoryStore, select


WORLD = WorldConfig(
    n_labeled=12,
    n_unlabeled=24,
    num_features=8,
    num_tokens=32,
    response_length=3,
    n_clusters=4,
    ood_fraction=0.25,
    bias_fraction=0.25,
    seed=3,
)

TRAPO = TrainerConfig(seed=3, epochs=6, warmup_epochs=2, paradigm="trapo")


@pytest.fixture(scope="module")
def trapo_result():
    return run(TRAPO, WORLD)


def fresh_state(dataset, policy):
    return TrainState(
        policy=copy.deepcopy(policy),
        db=ReliableDatabase.initial(dataset.labeled_ids),
        store=TrajectoryStore([q.question_id for q in dataset.questions]),
    )


# ---------------------------------------------------------------------------
# shape and bookkeeping of a run


def test_run_metrics_and_records_shape(trapo_result):
    res = trapo_result
    assert [m.epoch for m in res.metrics] == [1, 2, 3, 4, 5, 6]
    # one record per question per epoch, epoch-major, labeled block first
    assert len(res.records) == 36 * 6
    for e in range(6):
        chunk = res.records[e * 36 : (e + 1) * 36]
        assert all(r.epoch == e + 1 for r in chunk)
        assert [r.split for r in chunk] == ["labeled"] * 12 + ["unlabeled"] * 24
        assert [r.qid for r in chunk] == list(range(36))
    for qid in range(36):
        assert len(res.store.get(qid)) == 6


def test_masks_exist_only_after_warmup(trapo_result):
    assert sorted(trapo_result.masks) == [3, 4, 5, 6]
    for epoch, mask in trapo_result.masks.items():
        assert mask.epoch == epoch


def test_pass_rates_are_multiples_of_group_resolution(trapo_result):
    g = TRAPO.group_size
    for r in trapo_result.records:
        scaled = r.pass_rate * g
        assert abs(scaled - round(scaled)) < 1e-12
        assert 0.0 <= r.pass_rate <= 1.0


def test_record_fields_by_split_and_phase(trapo_result):
    for r in trapo_result.records:
        if r.split == "labeled":
            assert r.pseudo_label is None
            assert r.confidence is None
            assert r.tie is False
            assert r.selected is False
            assert r.tcs is None
        else:
            assert isinstance(r.pseudo_label, int)
            assert 0.0 < r.confidence <= 1.0
            if r.epoch <= TRAPO.warmup_epochs:
                assert r.selected is False
                assert r.tcs is None
            else:
                assert r.tcs is not None
                assert 0.0 <= r.tcs <= 1.0


def test_mask_reproducible_from_its_own_scores(trapo_result):
    res = trapo_result
    unlabeled_ids = set(res.dataset.unlabeled_ids)
    floor = math.ceil(TRAPO.top_p * len(unlabeled_ids) - 1e-9)
    for epoch, mask in res.masks.items():
        assert set(mask.tcs_scores) == unlabeled_ids
        assert mask.selected <= unlabeled_ids
        assert len(mask.selected) >= floor
        replay = select(mask.tcs_scores, TRAPO.top_p, TRAPO.gamma, epoch)
        assert replay.selected == mask.selected
        assert res.metrics[epoch - 1].n_selected == len(mask.selected)


def test_selected_flags_match_masks(trapo_result):
    res = trapo_result
    for r in res.records:
        if r.split == "unlabeled" and r.epoch in res.masks:
            assert r.selected == (r.qid in res.masks[r.epoch].selected)


def test_metrics_value_ranges(trapo_result):
    for m in trapo_result.metrics:
        for name in ("labeled_train_acc", "eval_acc_id", "eval_acc_ood",
                     "pseudo_acc_selected", "pseudo_acc_unselected",
                     "mean_tcs_selected", "mean_tcs_unselected"):
            value = getattr(m, name)
            if value is not None:
                assert 0.0 <= value <= 1.0
        assert 0.0 < m.mean_confidence <= 1.0
        assert np.isfinite(m.loss)
        if m.epoch <= TRAPO.warmup_epochs:
            assert m.n_selected == 0
            assert m.rtc is None
            assert m.mean_divergence is None
        else:
            assert m.n_selected == len(trapo_result.masks[m.epoch].selected)
            assert m.rtc is not None and m.rtc >= 0.0
            assert 0.0 <= m.mean_divergence <= 1.0


def test_initial_eval_reports_biased_start(trapo_result):
    ev = trapo_result.initial_eval
    assert set(ev) == {"labeled_train_acc", "eval_acc_id", "eval_acc_ood", "eval_acc_biased"}
    # verified bias bump: every biased question starts greedily wrong
    assert ev["eval_acc_biased"] == 0.0


# ---------------------------------------------------------------------------
# paradigm equivalences (exact)


def test_warmup_is_bit_identical_to_supervised():
    dataset = generate_world(WORLD)
    policy = init_policy(dataset, WORLD)
    cfg_trapo = TrainerConfig(seed=3, epochs=6, warmup_epochs=3, paradigm="trapo")
    cfg_sup = TrainerConfig(seed=3, epochs=6, warmup_epochs=3, paradigm="supervised")
    st_trapo = fresh_state(dataset, policy)
    st_sup = fresh_state(dataset, policy)
    for epoch in range(1, 4):
        m_trapo = train_epoch(dataset, cfg_trapo, st_trapo, epoch)
        m_sup = train_epoch(dataset, cfg_sup, st_sup, epoch)
        assert np.array_equal(st_trapo.policy.params.weights, st_sup.policy.params.weights)
        assert m_trapo.loss == m_sup.loss
        assert m_trapo.labeled_train_acc == m_sup.labeled_train_acc
    # first post-warmup epoch admits unlabeled questions and breaks the tie
    train_epoch(dataset, cfg_trapo, st_trapo, 4)
    train_epoch(dataset, cfg_sup, st_sup, 4)
    assert not np.array_equal(st_trapo.policy.params.weights, st_sup.policy.params.weights)


def test_gamma_zero_trapo_equals_naive_semi():
    cfg_trapo = TrainerConfig(seed=5, epochs=5, warmup_epochs=0, gamma=0.0, paradigm="trapo")
    cfg_naive = TrainerConfig(seed=5, epochs=5, warmup_epochs=0, gamma=0.0, paradigm="naive_semi")
    res_t = run(cfg_trapo, WORLD)
    res_n = run(cfg_naive, WORLD)
    assert np.array_equal(res_t.policy.params.weights, res_n.policy.params.weights)
    for mt, mn in zip(res_t.metrics, res_n.metrics):
        assert mt.loss == mn.loss
        assert mt.eval_acc_id == mn.eval_acc_id
    # gamma=0 admits every unlabeled question every epoch
    for mask in res_t.masks.values():
        assert mask.selected == set(res_t.dataset.unlabeled_ids)
    # records agree on everything except the selection-only fields
    for rt, rn in zip(res_t.records, res_n.records):
        assert (rt.epoch, rt.qid, rt.split, rt.pass_rate, rt.pseudo_label,
                rt.confidence, rt.tie) == (
            rn.epoch, rn.qid, rn.split, rn.pass_rate, rn.pseudo_label,
            rn.confidence, rn.tie)


def test_supervised_run_never_selects():
    res = run(TrainerConfig(seed=3, epochs=4, warmup_epochs=1, paradigm="supervised"), WORLD)
    assert res.masks == {}
    assert all(m.n_selected == 0 for m in res.metrics)
    assert all(m.rtc is None for m in res.metrics)
    assert all(r.selected is False for r in res.records)
    assert all(r.tcs is None for r in res.records)


def test_unsupervised_with_no_unlabeled_is_inert():
    world = WorldConfig(n_labeled=8, n_unlabeled=0, num_features=6, num_tokens=16,
                        n_clusters=2, ood_fraction=0.0, bias_fraction=0.0, seed=1)
    dataset = generate_world(world)
    policy = init_policy(dataset, world)
    initial = policy.params.weights.copy()
    res = run(TrainerConfig(seed=1, epochs=3, warmup_epochs=0, paradigm="unsupervised"),
              dataset=dataset, policy=policy)
    assert np.array_equal(res.policy.params.weights, initial)
    assert all(m.loss == 0.0 for m in res.metrics)
    assert all(m.eval_acc_id is None for m in res.metrics)
    assert all(m.mean_confidence is None for m in res.metrics)


def test_run_needs_at_least_one_labeled_question():
    """The reliable set is seeded from labeled questions unconditionally, so a
    world without any labeled questions cannot be run (though it is a valid
    dataset for the lower-level building blocks)."""
    world = WorldConfig(n_labeled=0, n_unlabeled=10, num_features=6, num_tokens=16,
                        n_clusters=2, ood_fraction=0.0, bias_fraction=0.0, seed=1)
    dataset = generate_world(world)
    policy = init_policy(dataset, world)
    with pytest.raises(ValueError):
        run(TrainerConfig(seed=1, epochs=3, warmup_epochs=0, paradigm="supervised"),
            dataset=dataset, policy=policy)


# ---------------------------------------------------------------------------
# determinism and logs


def test_rerun_writes_byte_identical_logs(tmp_path):
    dir_a, dir_b = str(tmp_path / "a"), str(tmp_path / "b")
    res_a = run(TRAPO, WORLD, out_dir=dir_a)
    res_b = run(TRAPO, WORLD, out_dir=dir_b)
    assert np.array_equal(res_a.policy.params.weights, res_b.policy.params.weights)
    for name in ("passrates.jsonl", "metrics.jsonl"):
        with open(os.path.join(dir_a, name), "rb") as fa:
            payload_a = fa.read()
        with open(os.path.join(dir_b, name), "rb") as fb:
            payload_b = fb.read()
        assert payload_a == payload_b
        assert payload_a  # nonempty


def test_written_passrates_parse_back(tmp_path, trapo_result):
    out = str(tmp_path / "logs")
    run(TRAPO, WORLD, out_dir=out)
    parsed = read_passrates(os.path.join(out, "passrates.jsonl"))
    assert len(parsed) == len(trapo_result.records)
    for got, want in zip(parsed, trapo_result.records):
        assert (got.epoch, got.qid, got.split) == (want.epoch, want.qid, want.split)
        assert got.pass_rate == want.pass_rate  # eighths are exact in decimal
        assert got.selected == want.selected


# ---------------------------------------------------------------------------
# offline replay


def test_offline_select_reproduces_online_masks(trapo_result):
    res = trapo_result
    offline = offline_select(
        res.records,
        top_p=TRAPO.top_p,
        gamma=TRAPO.gamma,
        warmup_epochs=TRAPO.warmup_epochs,
        matching_mode=TRAPO.matching_mode,
        db_policy=TRAPO.db_policy,
    )
    assert isinstance(offline, OfflineSelection)
    assert len(offline.masks) == TRAPO.epochs - TRAPO.warmup_epochs
    for mask in offline.masks:
        online = res.masks[mask.epoch]
        assert mask.selected == online.selected
        assert mask.tcs_scores == online.tcs_scores
    assert offline.db.sorted_members == res.db.sorted_members
    assert offline.split_of == {
        q.question_id: ("labeled" if q.gold_answer is not None else "unlabeled")
        for q in res.dataset.questions
    }


def test_offline_select_from_parsed_file(tmp_path, trapo_result):
    out = str(tmp_path / "logs")
    run(TRAPO, WORLD, out_dir=out)
    parsed = read_passrates(os.path.join(out, "passrates.jsonl"))
    offline = offline_select(
        parsed,
        top_p=TRAPO.top_p,
        gamma=TRAPO.gamma,
        warmup_epochs=TRAPO.warmup_epochs,
        matching_mode=TRAPO.matching_mode,
        db_policy=TRAPO.db_policy,
    )
    for mask in offline.masks:
        assert mask.selected == trapo_result.masks[mask.epoch].selected


def test_offline_select_validates_inputs(trapo_result):
    records = trapo_result.records
    with pytest.raises(ConfigError):
        offline_select(records, top_p=0.1, gamma=0.4, warmup_epochs=6)
    unlabeled_only = [r for r in records if r.split == "unlabeled"]
    with pytest.raises(LogParseError):
        offline_select(unlabeled_only, top_p=0.1, gamma=0.4)
    with pytest.raises((ConfigError, LogParseError)):
        offline_select([], top_p=0.1, gamma=0.4)


def test_inert_threshold_gives_exact_keep_fraction():
    """With the admission threshold too high to fire, every post-warmup mask
    has exactly ceil(top_p * n_unlabeled) members."""
    cfg = TrainerConfig(seed=4, epochs=6, warmup_epochs=2, paradigm="trapo",
                        top_p=0.25, gamma=1.0)
    res = run(cfg, WORLD)
    n = len(res.dataset.unlabeled_ids)
    exact = 0
    for mask in res.masks.values():
        if max(mask.tcs_scores.values()) < 1.0:  # threshold truly inert
            assert len(mask.selected) == math.ceil(cfg.top_p * n)
            exact += 1
    assert exact >= 2  # the property was actually exercised


# ---------------------------------------------------------------------------
# run/sweep argument handling


def test_run_requires_policy_with_explicit_dataset():
    dataset = generate_world(WORLD)
    with pytest.raises(ValueError):
        run(TrainerConfig(seed=3, epochs=2), dataset=dataset)


def test_verifiable_rewards_limited_to_supervised():
    cfg = TrainerConfig(seed=3, epochs=2, reward_kind="verifiable", paradigm="trapo",
                        warmup_epochs=1)
    with pytest.raises(ConfigError):
        run(cfg, WORLD)
    ok = run(TrainerConfig(seed=3, epochs=2, reward_kind="verifiable",
                           paradigm="supervised", warmup_epochs=1), WORLD)
    assert len(ok.metrics) == 2


def test_invalid_trainer_config_rejected_before_running():
    with pytest.raises(ConfigError):
        run(TrainerConfig(seed=3, epochs=2, warmup_epochs=5), WORLD)


def test_sweep_varies_one_axis_on_a_shared_world():
    base = TrainerConfig(seed=3, epochs=3, warmup_epochs=1, paradigm="trapo")
    results = sweep(base, "top_p", [0.1, 0.5], WORLD)
    assert [r.trainer_config.top_p for r in results] == [0.1, 0.5]
    assert results[0].dataset.eval_answers == results[1].dataset.eval_answers
    assert np.array_equal(results[0].dataset.questions[0].features,
                          results[1].dataset.questions[0].features)
    # a larger keep fraction can only grow each epoch's selected set
    for m0, m1 in zip(results[0].metrics, results[1].metrics):
        if m0.epoch > base.warmup_epochs:
            assert m1.n_selected >= m0.n_selected


def test_sweep_rejects_unknown_axis():
    with pytest.raises(ConfigError):
        sweep(TrainerConfig(seed=3, epochs=2), "not_a_field", [1, 2], WORLD)


def test_greedy_accuracy_empty_population_is_none():
    dataset = generate_world(WORLD)
    policy = init_policy(dataset, WORLD)
    assert greedy_accuracy(policy.params, [], dataset.eval_answers, 3) is None
