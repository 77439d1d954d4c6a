import numpy as np
import pytest

from t2dpolicy.cohort import ADMISSIBLE_OPTIONS, NO_MEDICATION
from t2dpolicy.synthgen import (
    GeneratorConfig,
    InadmissibleAction,
    InvalidConfig,
    _generate_visit,
    behavior_arm_gap,
    generate,
    load_ground_truth,
    save_ground_truth,
    true_regret,
)


class TestConfig:
    def test_mix_must_sum_to_one(self):
        with pytest.raises(InvalidConfig):
            GeneratorConfig(n_visits=10, group_mix=(0.5, 0.5, 0.5, 0.5))

    def test_counts_and_signs(self):
        with pytest.raises(InvalidConfig):
            GeneratorConfig(n_visits=0)
        with pytest.raises(InvalidConfig):
            GeneratorConfig(n_visits=10, confounding_strength=-1)
        with pytest.raises(InvalidConfig):
            GeneratorConfig(n_visits=10, noise_sd=-0.1)


class TestDeterminism:
    def test_same_seed_identical_output(self):
        cfg = GeneratorConfig(n_visits=1000, seed=42)
        c1, g1 = generate(cfg)
        c2, g2 = generate(cfg)
        assert c1.visits == c2.visits
        assert g1 == g2

    def test_per_visit_streams_are_independent_of_batching(self):
        cfg = GeneratorConfig(n_visits=50, seed=9)
        cohort, _ = generate(cfg)
        # regenerating any single visit in isolation reproduces it exactly
        for i in (0, 17, 49):
            visit, _, _, _ = _generate_visit(cfg, i)
            assert visit == cohort[i]

    def test_different_seeds_differ(self):
        c1, _ = generate(GeneratorConfig(n_visits=100, seed=1))
        c2, _ = generate(GeneratorConfig(n_visits=100, seed=2))
        assert c1.visits != c2.visits


class TestCalibration:
    def test_zero_confounding_balances_arms(self):
        cohort, _ = generate(GeneratorConfig(n_visits=20000, seed=42, confounding_strength=0.0))
        assert abs(behavior_arm_gap(cohort)) < 0.1

    def test_default_gap_matches_target_band(self):
        cohort, _ = generate(GeneratorConfig(n_visits=20000, seed=42))
        gap = behavior_arm_gap(cohort)
        assert 0.8 <= gap <= 1.4

    def test_gap_monotone_in_confounding(self):
        gaps = []
        ses = []
        for cs in (0.0, 0.75, 1.5):
            cohort, _ = generate(
                GeneratorConfig(n_visits=20000, seed=42, confounding_strength=cs)
            )
            a = [v.hba1c_last for v in cohort
                 if v.current_regimen.label == NO_MEDICATION
                 and v.prescribed_regimen.label == "InsulinMono"]
            b = [v.hba1c_last for v in cohort
                 if v.current_regimen.label == NO_MEDICATION
                 and v.prescribed_regimen.label == "NoMedication"]
            gaps.append(np.mean(a) - np.mean(b))
            ses.append(np.sqrt(np.var(a) / len(a) + np.var(b) / len(b)))
        assert gaps[1] >= gaps[0] - (ses[0] + ses[1])
        assert gaps[2] >= gaps[1] - (ses[1] + ses[2])

    def test_generated_visits_pass_validation(self):
        cohort, _ = generate(GeneratorConfig(n_visits=500, seed=3))
        for v in cohort:
            v.validate()
            assert v.prescribed_regimen.label in ADMISSIBLE_OPTIONS[v.current_regimen.label]

    def test_decrease_fraction_is_a_floor(self):
        cohort, _ = generate(GeneratorConfig(n_visits=5000, seed=11, decrease_fraction=0.7))
        frac = np.mean([v.reduction() > 0 for v in cohort])
        assert frac >= 0.7
        forced, _ = generate(GeneratorConfig(n_visits=2000, seed=11, decrease_fraction=1.0))
        assert all(v.reduction() > 0 for v in forced)


class TestGroundTruth:
    def test_optimal_action_attains_maximum(self):
        _, gt = generate(GeneratorConfig(n_visits=300, seed=5))
        for vid, effects in gt.options.items():
            assert effects[gt.optimal_action[vid]] == max(effects.values())

    def test_regret_of_optimal_policy_is_zero(self):
        _, gt = generate(GeneratorConfig(n_visits=200, seed=6))
        assert true_regret(dict(gt.optimal_action), gt) == 0.0

    def test_behavior_policy_has_positive_regret(self):
        _, gt = generate(GeneratorConfig(n_visits=2000, seed=7))
        assert true_regret(dict(gt.behavior_action), gt) > 0

    def test_regret_is_linear_in_single_visit_changes(self):
        _, gt = generate(GeneratorConfig(n_visits=100, seed=8))
        base = dict(gt.optimal_action)
        vid = next(iter(base))
        effects = gt.options[vid]
        other = next(o for o in effects if o != base[vid])
        changed = dict(base)
        changed[vid] = other
        delta = (effects[base[vid]] - effects[other]) / len(base)
        assert true_regret(changed, gt) - true_regret(base, gt) == pytest.approx(delta, abs=1e-12)

    def test_inadmissible_action_rejected(self):
        _, gt = generate(GeneratorConfig(n_visits=10, seed=9))
        vid = next(
            v for v in gt.options if gt.options[v].keys() == set(ADMISSIBLE_OPTIONS[NO_MEDICATION])
        )
        with pytest.raises(InadmissibleAction):
            true_regret({vid: "MetforminInsulinOther"}, gt)

    def test_csv_round_trip(self, tmp_path):
        _, gt = generate(GeneratorConfig(n_visits=50, seed=10))
        path = tmp_path / "truth.csv"
        save_ground_truth(gt, path)
        again = load_ground_truth(path)
        assert again.optimal_action == gt.optimal_action
        assert again.behavior_action == gt.behavior_action
        for vid in gt.options:
            assert set(again.options[vid]) == set(gt.options[vid])
            for o, val in gt.options[vid].items():
                assert again.options[vid][o] == val
