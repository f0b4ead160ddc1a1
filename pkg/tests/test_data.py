import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from policydelta import (
    Dataset,
    Framing,
    LoggedRecord,
    PolicyTable,
    RewardModel,
    SyntheticConfig,
    gen_ab_experiment,
    split_by_arm,
    true_policy_value,
    validate_dataset,
)
from policydelta.data import EstimateResult
from policydelta.errors import (
    ActionOutOfRange,
    EmptyArm,
    EmptyDataset,
    InvalidPolicy,
    NonFiniteExpectedReward,
    NonFinitePropensity,
    UnknownArmLabel,
    WrongFraming,
)


def ab_rec(arm, action, y=1.0, p=0.5):
    return {"context_id": 0, "covariates": [0.0], "action": action, "reward": y,
            "propensity": p, "arm": arm}


class TestValidateDataset:
    def test_two_ab_records(self):
        d = validate_dataset([ab_rec("T", 0), ab_rec("C", 1)], Framing.AB)
        assert d.framing is Framing.AB
        assert len(d) == 2
        assert d.arm_labels == ("T", "C")

    def test_zero_propensity_rejected(self):
        with pytest.raises(NonFinitePropensity):
            validate_dataset([ab_rec("T", 0, p=0.0)], Framing.AB)

    @pytest.mark.parametrize("p", [1.5, float("nan"), -0.1])
    def test_bad_propensity_rejected(self, p):
        with pytest.raises(NonFinitePropensity):
            validate_dataset([ab_rec("T", 0, p=p)], Framing.AB)

    def test_propensity_one_allowed(self):
        d = validate_dataset([{"context_id": 0, "action": 0, "reward": 1.0, "propensity": 1.0}], "OPE")
        assert d.propensity[0] == 1.0

    def test_action_out_of_range(self):
        rec = {"context_id": 0, "covariates": [], "action": 5, "reward": 1.0, "propensity": 0.2}
        with pytest.raises(ActionOutOfRange):
            validate_dataset([rec], Framing.OPE, action_count=3)

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            validate_dataset([], Framing.OPE)

    def test_unknown_arm(self):
        with pytest.raises(UnknownArmLabel):
            validate_dataset([ab_rec("T", 0), ab_rec("X", 1)], Framing.AB, arm_labels=("T", "C"))

    def test_ab_requires_arm(self):
        with pytest.raises(UnknownArmLabel):
            validate_dataset([{"context_id": 0, "action": 0, "reward": 1.0, "propensity": 0.5}], "AB")

    def test_immutable(self):
        d = validate_dataset([ab_rec("T", 0), ab_rec("C", 1)], Framing.AB)
        with pytest.raises(ValueError):
            d.reward[0] = 5.0

    def test_records_roundtrip(self):
        recs = [LoggedRecord(0, (1.0, 2.0), 0, 3.0, 0.5, "T"), LoggedRecord(1, (0.0, -1.0), 1, 1.0, 0.5, "C")]
        d = validate_dataset(recs, Framing.AB)
        assert d.records == tuple(recs)


class TestSplitByArm:
    def test_partition_order(self):
        d = validate_dataset([ab_rec("T", 0, 1.0), ab_rec("C", 1, 2.0), ab_rec("T", 0, 3.0)], Framing.AB)
        t, c = split_by_arm(d)
        assert t.reward.tolist() == [1.0, 3.0]
        assert c.reward.tolist() == [2.0]
        assert t.index.tolist() == [0, 2]

    def test_empty_arm(self):
        d = validate_dataset([ab_rec("T", 0), ab_rec("T", 0)], Framing.AB, arm_labels=("T", "C"))
        with pytest.raises(EmptyArm):
            split_by_arm(d)

    def test_wrong_framing(self):
        d = validate_dataset([{"context_id": 0, "action": 0, "reward": 1.0, "propensity": 1.0}], "OPE")
        with pytest.raises(WrongFraming):
            split_by_arm(d)

    def test_generator_counts(self):
        exp, _ = gen_ab_experiment(SyntheticConfig(n=1000, seed=7, p=0.5))
        t, c = split_by_arm(exp.d)
        assert len(t) + len(c) == 1000
        assert len(t) == exp.n_treatment

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.booleans(), min_size=2, max_size=40).filter(lambda xs: 0 < sum(xs) < len(xs)))
    def test_partition_property(self, treated):
        n = len(treated)
        d = Dataset.from_arrays(
            context_id=np.arange(n), action=[0 if t else 1 for t in treated],
            reward=np.arange(n, dtype=float), propensity=np.full(n, 0.5),
            arm=["T" if t else "C" for t in treated], framing="AB", arm_labels=("T", "C"),
        )
        t, c = split_by_arm(d)
        idx = np.concatenate([t.index, c.index])
        order = np.argsort(idx)
        assert np.array_equal(np.concatenate([t.reward, c.reward])[order], d.reward)


class TestPolicyTable:
    def test_rows_must_sum_to_one(self):
        with pytest.raises(InvalidPolicy):
            PolicyTable(np.array([[0.5, 0.6]]))

    def test_negative_rejected(self):
        with pytest.raises(InvalidPolicy):
            PolicyTable(np.array([[1.5, -0.5]]))

    def test_context_free_broadcast(self):
        pi = PolicyTable.point_mass(1, 3)
        assert pi.prob(np.array([0, 7]), np.array([1, 1])).tolist() == [1.0, 1.0]

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_normalised_rows(self, n_ctx, n_act, seed):
        raw = np.random.default_rng(seed).random((n_ctx, n_act)) + 1e-3
        pi = PolicyTable(raw / raw.sum(axis=1, keepdims=True))
        assert np.all(np.abs(pi.probabilities.sum(axis=1) - 1) <= 1e-12)


class TestTruePolicyValue:
    def test_single_term(self):
        cfg = SyntheticConfig(framing="OPE", context_count=1, action_count=2, reward_table=[[3.0, 9.0]])
        assert true_policy_value(PolicyTable.point_mass(0, 2), cfg) == 3.0

    def test_uniform_two_actions(self):
        cfg = SyntheticConfig(framing="OPE", context_count=1, action_count=2, reward_table=[[0.0, 2.0]])
        assert true_policy_value(PolicyTable.uniform(2), cfg) == pytest.approx(1.0, abs=1e-15)

    def test_identical_policies_zero_difference(self):
        cfg = SyntheticConfig(framing="OPE", context_count=3, action_count=2, seed=4)
        from policydelta.synth import with_reward_table
        cfg = with_reward_table(cfg)
        pi = PolicyTable(np.array([[0.2, 0.8], [0.5, 0.5], [1.0, 0.0]]))
        assert true_policy_value(pi, cfg) - true_policy_value(pi, cfg) == 0.0

    def test_nonfinite_table(self):
        cfg = SyntheticConfig(framing="OPE", context_count=1, action_count=2)
        object.__setattr__(cfg, "reward_table", ((float("inf"), 0.0),))
        with pytest.raises(NonFiniteExpectedReward):
            true_policy_value(PolicyTable.uniform(2), cfg)

    @pytest.mark.parametrize("alpha", [0.0, 0.25, 1.0])
    def test_linear_in_policy(self, alpha):
        rng = np.random.default_rng(11)
        table = rng.normal(size=(3, 4))
        cfg = SyntheticConfig(framing="OPE", context_count=3, action_count=4, reward_table=table.tolist())
        a, b = rng.random((3, 4)), rng.random((3, 4))
        rho, rho2 = PolicyTable(a / a.sum(1, keepdims=True)), PolicyTable(b / b.sum(1, keepdims=True))
        mix = PolicyTable(alpha * rho.probabilities + (1 - alpha) * rho2.probabilities)
        expected = alpha * true_policy_value(rho, cfg) + (1 - alpha) * true_policy_value(rho2, cfg)
        assert true_policy_value(mix, cfg) == pytest.approx(expected, abs=1e-12)


class TestRewardModel:
    def test_agnostic_ignores_action(self):
        d = Dataset.from_arrays(context_id=[0, 1], covariates=[[1.0], [2.0]], action=[0, 1],
                                reward=[0.0, 0.0], propensity=[0.5, 0.5], framing="OPE", action_count=2)
        f = RewardModel.linear([2.0], 1.0)
        assert np.array_equal(f.predict(d, np.array([0, 0])), f.predict(d, np.array([1, 1])))
        assert f.predict(d).tolist() == [3.0, 5.0]

    def test_values_follow_original_index(self):
        d = validate_dataset([ab_rec("T", 0), ab_rec("C", 1), ab_rec("T", 0)], Framing.AB)
        f = RewardModel.from_values([10.0, 20.0, 30.0])
        t, c = split_by_arm(d)
        assert f.predict(t).tolist() == [10.0, 30.0]
        assert f.predict(c).tolist() == [20.0]


def test_estimate_result_ci():
    r = EstimateResult.build(1.0, 4.0, dof_loss=2, n_used=10)
    assert r.stderr == 2.0
    assert r.ci_low == pytest.approx(1.0 - 1.959963984540054 * 2.0, abs=1e-12)
    assert r.ci_low <= r.point <= r.ci_high
    assert EstimateResult.from_dict(r.to_dict()) == r
