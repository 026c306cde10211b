import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from causalglm import apply_shift, gen_fig1, gen_fig3, gen_fig4, generate
from causalglm.simulate import (
    ROW_BLOCK,
    Expr,
    NodeSpec,
    ScmError,
    ScmSpec,
    TargetSpec,
    fig1_spec,
    fig3_spec,
    fig4_spec,
    poisson_quantile_normal,
)


class TestFig1:
    def test_shape_and_variances(self, fig1_large):
        assert fig1_large.names == ("X1", "X2")
        assert np.var(fig1_large.column("X2")) == pytest.approx(3.0, abs=0.1)
        assert np.var(fig1_large.column("X1")) == pytest.approx(1.0, abs=0.05)

    def test_conditional_mean(self, fig1_large):
        ratio = fig1_large.y / np.exp(fig1_large.column("X1"))
        assert np.mean(ratio) == pytest.approx(1.0, abs=0.02)

    def test_same_seed_bit_identical(self):
        a, b = gen_fig1(20_000, 5), gen_fig1(20_000, 5)
        assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()
        assert not np.array_equal(a.X, gen_fig1(20_000, 6).X)

    def test_prefix_stable_across_n(self):
        # row blocks make the first rows independent of the total size
        small, big = gen_fig1(100, 3), gen_fig1(ROW_BLOCK + 100, 3)
        np.testing.assert_array_equal(small.X, big.X[:100])
        np.testing.assert_array_equal(small.y, big.y[:100])


class TestFig3:
    def test_columns(self):
        assert gen_fig3(10, 0).names == tuple(f"X{j}" for j in range(1, 8))

    def test_x7_tracks_x6(self):
        d = gen_fig3(10_000, 1)
        assert np.corrcoef(d.column("X6"), d.column("X7"))[0, 1] > 0.9

    def test_conditional_mean_slope(self):
        d = gen_fig3(100_000, 2)
        m = np.exp(np.sin(5 * d.column("X2")) + d.column("X3") ** 3)
        slope = (m @ d.y) / (m @ m)
        assert slope == pytest.approx(1.0, abs=0.05)

    def test_n_zero_rejected(self):
        with pytest.raises(ScmError):
            gen_fig3(0, 0)


class TestFig4:
    def test_balanced_at_origin(self):
        d = gen_fig4(200_000, 3)
        near = (np.abs(d.column("X2")) < 0.05) & (np.abs(d.column("X3")) < 0.05)
        assert d.y[near].mean() == pytest.approx(0.5, abs=0.08)

    @pytest.mark.parametrize("pi", [0.1, 0.3])
    def test_x5_label_contrast(self, pi):
        d = gen_fig4(100_000, 4, pi)
        x5 = d.column("X5")
        diff = x5[d.y == 1].mean() - x5[d.y == 0].mean()
        assert diff == pytest.approx(1 - 2 * pi, abs=0.03)

    @pytest.mark.parametrize("pi", [0.0, 1.0, -0.2])
    def test_pi_range(self, pi):
        with pytest.raises(ScmError):
            gen_fig4(10, 0, pi)

    def test_assumed_defaults_noted(self):
        assert any("pi=0.1" in note for note in gen_fig4(5, 0).meta["notes"])


class TestShift:
    def test_zero_shift_identical(self):
        d = gen_fig1(5000, 8)
        s = apply_shift(d, 0.0, ["X1", "X2"], 8)
        np.testing.assert_array_equal(d.X, s.X)
        np.testing.assert_array_equal(d.y, s.y)

    def test_shift_propagates_to_children(self):
        d = gen_fig1(100_000, 9)
        s = apply_shift(d, 4.0, ["X1"], 9)
        rise = np.var(s.column("X2")) - np.var(d.column("X2"))
        assert rise == pytest.approx(4.0, rel=0.05)
        # target law given the parent is unchanged
        assert np.mean(s.y / np.exp(s.column("X1"))) == pytest.approx(1.0, abs=0.05)

    def test_target_cannot_be_shifted(self):
        with pytest.raises(ScmError):
            apply_shift(gen_fig1(10, 0), 1.0, ["Y"], 0)

    def test_unknown_variable(self):
        with pytest.raises(KeyError):
            apply_shift(gen_fig1(10, 0), 1.0, ["X9"], 0)


class TestPoissonQuantile:
    @settings(max_examples=100, deadline=None)
    @given(z=st.floats(-7, 7), log_mu=st.floats(-6, 12))
    def test_matches_scipy(self, z, log_mu):
        mu = np.exp(log_mu)
        got = poisson_quantile_normal(np.array([z]), np.array([mu]))[0]
        ref = stats.poisson.ppf(stats.norm.cdf(z), mu) if z <= 0 else stats.poisson.isf(stats.norm.sf(z), mu)
        assert got == ref

    def test_marginal_law_is_poisson(self):
        rng = np.random.default_rng(0)
        k = poisson_quantile_normal(rng.standard_normal(200_000), np.full(200_000, 3.5))
        assert k.mean() == pytest.approx(3.5, abs=0.02)
        assert k.var() == pytest.approx(3.5, abs=0.05)


class TestSpec:
    def test_json_round_trip(self, tmp_path):
        for spec in (fig1_spec(), fig3_spec(), fig4_spec(0.2)):
            path = tmp_path / f"{spec.label}.json"
            spec.to_json(path)
            assert ScmSpec.from_json(path) == spec
            json.loads(path.read_text())

    def test_declaration_order_invariance(self):
        spec = fig3_spec()
        shuffled = ScmSpec(tuple(reversed(spec.nodes)), spec.target, spec.label)
        a, b = generate(spec, 3000, 4), generate(shuffled, 3000, 4)
        np.testing.assert_array_equal(a.column("X7"), b.column("X7"))
        np.testing.assert_array_equal(a.y, b.y)

    def test_cycle_rejected(self):
        with pytest.raises(ScmError):
            ScmSpec((NodeSpec("A", ("B",), "B"), NodeSpec("B", ("A",), "A")),
                    TargetSpec("Y", "poisson", "A", ("A",)))

    @pytest.mark.parametrize("source", ["A ** 2", "__import__('os')", "A / 2", "A if A else 0", "exp"])
    def test_expression_whitelist(self, source):
        with pytest.raises(ScmError):
            Expr(source)

    def test_expression_evaluates(self):
        env = {"A": np.array([0.0, 1.0]), "B": np.array([2.0, -1.0])}
        np.testing.assert_allclose(Expr("cube(A) - 2*B + sin(0*A) + exp(0)")(env, 2), [-3.0, 4.0])

    def test_undeclared_parent(self):
        with pytest.raises(ScmError):
            ScmSpec((NodeSpec("A"), NodeSpec("B", (), "A")), TargetSpec("Y", "poisson", "A", ("A",)))

    def test_custom_bernoulli_target_without_latent(self):
        spec = ScmSpec((NodeSpec("A"),), TargetSpec("Y", "bernoulli", "2*A", ("A",)))
        d = generate(spec, 50_000, 1)
        assert set(np.unique(d.y)) <= {0.0, 1.0}
        assert d.y.mean() == pytest.approx(0.5, abs=0.02)

    def test_poisson_rate_overflow_guarded(self):
        spec = ScmSpec((NodeSpec("A", (), "0", 1.0),), TargetSpec("Y", "poisson", "800 + A", ("A",)))
        with pytest.raises(ArithmeticError):
            generate(spec, 10, 0)
