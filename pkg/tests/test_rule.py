import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import randomized_dataset
from splitreg import glm
from splitreg.errors import PositivityError, ValidationError
from splitreg.glm import FittedGlm, GlmSpec
from splitreg.rule import ConstantRule, TreatmentRule, build_rule, crossing_point, rule_from_dict
from splitreg.simulate import ROLES, SimConfig, generate
from splitreg.tabular import Dataset, RoleAssignment, encode

ROLES_XZ = RoleAssignment.from_names(["Z"], ["X"])


def linear(coef, names=("(Intercept)", "X")):
    coef = np.asarray(coef, float)
    return FittedGlm(coef, names, GlmSpec(), 0.0, True, 1, 0.0, np.zeros(len(coef)))


def hand_rule(b0, b1, higher_is_better=True):
    return TreatmentRule(linear(b0), linear(b1), ("X",), {}, "continuous", higher_is_better)


def test_identical_models_score_zero():
    r = hand_rule([0.3, -1.0], [0.3, -1.0])
    for x in (-2.0, 0.0, 5.0):
        assert r.score({"X": x}) == 0.0
        assert r.recommend({"X": x}) == 0


def test_linear_score_example():
    assert hand_rule([0, 0], [0, 1]).score({"X": 2.0}) == 2.0


def test_strict_threshold():
    r = hand_rule([0, 0], [0, 1])
    assert r.recommend({"X": 0.0}) == 0
    assert r.recommend({"X": 0.01}) == 1


def test_missing_rule_input():
    with pytest.raises(ValidationError):
        hand_rule([0, 0], [0, 1]).score({"Z": 1.0})


def test_true_curves_treat_above_14_over_11():
    cfg = SimConfig()
    a0, b0, _ = cfg.arm_coefficients(0)
    a1, b1, _ = cfg.arm_coefficients(1)
    r = hand_rule([a0, b0], [a1, b1])
    cut = 14 / 11
    assert r.recommend({"X": cut + 1e-9}) == 1
    assert r.recommend({"X": cut - 1e-9}) == 0
    assert crossing_point(r, "X") == pytest.approx(cut, abs=1e-12)


def test_randomized_fixture_matches_unweighted_fits():
    # confounders within the rule inputs: numerator and denominator coincide, weights are 1
    d = randomized_dataset(2_000, 11)
    roles = RoleAssignment.from_names(["X"], ["X", "Z"])
    rule = build_rule(d, roles)
    X = encode(d, ["X", "Z"])
    for t, model in ((0, rule.f0), (1, rule.f1)):
        rows = d.t == t
        plain = glm.fit(X.matrix[rows], d.y[rows])
        np.testing.assert_allclose(model.coefficients, plain.coefficients, atol=1e-6)


def test_naive_equals_unweighted_fits():
    d = generate(SimConfig(), 800, seed=12)
    rule = build_rule(d, ROLES, weighting="none")
    X = encode(d, ["X", "G"])
    for t, model in ((0, rule.f0), (1, rule.f1)):
        rows = d.t == t
        plain = glm.fit(X.matrix[rows], d.y[rows], spec=GlmSpec(link="logit"))
        np.testing.assert_allclose(model.coefficients, plain.coefficients, atol=1e-10)
    assert rule.propensity is None


def test_empty_arm_positivity_error():
    d = Dataset({"X": [0.1, 0.2, 0.3], "Z": [1.0, 2.0, 3.0], "T": [0, 0, 0], "Y": [0.0, 1.0, 2.0]}, "Y", "T")
    with pytest.raises(PositivityError):
        build_rule(d, ROLES_XZ)


def test_arm_named_in_numerical_errors():
    # treated arm outcome perfectly separated by X
    rng = np.random.default_rng(13)
    x = rng.normal(size=60)
    t = np.arange(60) % 2
    y = np.where(t == 1, (x > 0).astype(float), (rng.random(60) < 0.5).astype(float))
    d = Dataset({"X": x, "Z": rng.normal(size=60), "T": t, "Y": y}, "Y", "T", outcome_kind="binary")
    with pytest.raises(Exception, match="arm T=1"):
        build_rule(d, ROLES_XZ)


def test_binary_scores_in_open_interval():
    d = generate(SimConfig(), 600, seed=14)
    s = build_rule(d, ROLES).scores(d)
    assert np.all((s > -1) & (s < 1))


def test_diagnostics_and_round_trip():
    d = generate(SimConfig(), 600, seed=15)
    rule = build_rule(d, ROLES)
    assert rule.diagnostics["n_arm"]["0"] + rule.diagnostics["n_arm"]["1"] == 600
    assert rule.diagnostics["weights"]["1"]["max"] <= 19.0
    again = rule_from_dict(rule.to_dict())
    np.testing.assert_array_equal(again.scores(d), rule.scores(d))


def test_constant_rules():
    d = generate(SimConfig(), 10, seed=16)
    assert ConstantRule(1).recommendations(d).tolist() == [1] * 10
    assert rule_from_dict(ConstantRule(0).to_dict()).label == "treat-none"


def test_threads_do_not_change_result():
    d = generate(SimConfig(), 500, seed=17)
    a, b = build_rule(d, ROLES, threads=1), build_rule(d, ROLES, threads=2)
    np.testing.assert_array_equal(a.f1.coefficients, b.f1.coefficients)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_flip_direction(seed):
    d = randomized_dataset(300, seed)
    up = build_rule(d, ROLES_XZ)
    flipped = Dataset({c: d[c] for c in d.column_names}, "Y", "T", higher_is_better=False)
    down = build_rule(flipped, ROLES_XZ)
    s_up, s_down = up.scores(d), down.scores(d)
    np.testing.assert_allclose(s_down, -s_up, atol=1e-12)
    nz = s_up != 0
    assert np.all(up.recommendations(d)[nz] == 1 - down.recommendations(d)[nz])


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["continuous", "binary"]))
def test_recommend_iff_positive_score(seed, kind):
    d = randomized_dataset(300, seed, outcome_kind=kind)
    rule = build_rule(d, ROLES_XZ)
    s = rule.scores(d)
    np.testing.assert_array_equal(rule.recommendations(d), (s > 0).astype(int))
    for i in range(0, 300, 37):
        row = {"X": d["X"][i]}
        assert rule.recommend(row) == int(rule.score(row) > 0)
        assert rule.score(row) == pytest.approx(s[i], abs=1e-12)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_outcome_rescaling_keeps_recommendations(seed, c):
    d = randomized_dataset(300, seed)
    scaled = Dataset({"X": d["X"], "Z": d["Z"], "T": d["T"], "Y": d["Y"] * c}, "Y", "T")
    a, b = build_rule(d, ROLES_XZ), build_rule(scaled, ROLES_XZ)
    sa, sb = a.scores(d), b.scores(d)
    np.testing.assert_allclose(sb, c * sa, rtol=1e-8, atol=1e-10 * c)
    clear = np.abs(sa) > 1e-8
    np.testing.assert_array_equal(a.recommendations(d)[clear], b.recommendations(d)[clear])


def test_simulation_crossing_near_1_3():
    cfg = SimConfig()
    inside = 0
    for rep in range(200):
        rule = build_rule(generate(cfg, 1000, seed=np.random.SeedSequence([rep, 1000])), ROLES)
        x = crossing_point(rule, "X", {"G": 0.0})
        inside += x is not None and 1.15 <= x <= 1.40
    assert inside >= 180, f"crossing inside [1.15, 1.40] in {inside}/200 replications"
