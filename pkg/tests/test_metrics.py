import numpy as np
import pytest

from isingbm.datasets import from_rows, load_fixture, logic_gate
from isingbm.errors import CapacityError
from isingbm.metrics import (
    DEFAULT_BETA_GRID,
    Distribution,
    conditional_probability,
    dataset_distribution,
    dkl_beta_derivatives,
    excited_mass_curve,
    fit_beta,
    ground_state_probability_curve,
    hellinger,
    kl_divergence,
    model_probability,
    negative_conditional_log_likelihood,
    visible_marginal,
)
from isingbm.model import BoltzmannMachine, random_machine
from isingbm.samplers import SamplerConfig, exact_sample


def uniform_machine(n):
    return BoltzmannMachine(n, 0, 0, np.zeros(n), {})


# ---------------------------------------------------------------- Distribution


def test_distribution_validation():
    Distribution(((0,), (1,)), np.array([0.4, 0.6]))
    with pytest.raises(ValueError):
        Distribution(((0,), (0,)), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        Distribution(((0,), (1,)), np.array([0.4, 0.7]))
    with pytest.raises(ValueError):
        Distribution(((0,), (1,)), np.array([-0.1, 1.1]))


# ---------------------------------------------------------------- model probability


def test_model_probability_zero_params_uniform():
    dist = model_probability(uniform_machine(3), beta=2.0)
    assert np.allclose(dist.probs, 1 / 8)


def test_model_probability_high_temperature_limit(rng):
    bm = random_machine(3, 0, 1, rng)
    dist = visible_marginal(bm, beta=1e-9)
    assert np.max(np.abs(dist.probs - 1 / 8)) < 1e-6


def test_and_fixture_marginals_rank_gate_rows_first():
    bm = load_fixture("and_gate")
    dist = visible_marginal(bm, beta=3.0)
    ranked = sorted(dist.as_dict().items(), key=lambda kv: -kv[1])
    top4 = {state for state, _ in ranked[:4]}
    assert top4 == {(0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 1, 1)}


def test_model_probability_capacity():
    with pytest.raises(CapacityError):
        model_probability(uniform_machine(25), beta=1.0)


def test_projection_over_arbitrary_subset(rng):
    bm = random_machine(2, 0, 2, rng)
    joint = model_probability(bm, 1.5).as_dict()
    sub = model_probability(bm, 1.5, projection=[3, 1]).as_dict()
    expect = {}
    for state, p in joint.items():
        key = (state[3], state[1])
        expect[key] = expect.get(key, 0.0) + p
    for key, p in expect.items():
        assert sub[key] == pytest.approx(p, abs=1e-12)


# ---------------------------------------------------------------- divergences


def test_kl_zero_iff_equal():
    q = Distribution(((0,), (1,)), np.array([0.3, 0.7]))
    assert kl_divergence(q, q) == 0.0


def test_kl_and_rows_vs_uniform_eight():
    q = dataset_distribution(logic_gate("AND"))
    p = model_probability(uniform_machine(3), beta=1.0)
    assert kl_divergence(q, p) == pytest.approx(np.log(2), rel=1e-12)


def test_kl_missing_support_is_infinite():
    q = Distribution(((0,), (1,)), np.array([0.5, 0.5]))
    p = Distribution(((0,),), np.array([1.0]))
    assert kl_divergence(q, p) == float("inf")


def test_kl_nonnegative(rng):
    for _ in range(20):
        bm = random_machine(3, 0, 1, rng)
        q = visible_marginal(bm, 1.0)
        p = visible_marginal(random_machine(3, 0, 1, rng), 1.0)
        assert kl_divergence(q, p) >= 0.0


def test_hellinger_values():
    a = Distribution(((0,), (1,)), np.array([0.5, 0.5]))
    assert hellinger(a, a) == 0.0
    mass_on_0 = Distribution(((0,),), np.array([1.0]))
    mass_on_1 = Distribution(((1,),), np.array([1.0]))
    assert hellinger(mass_on_0, mass_on_1) == pytest.approx(0.7071067811865476)
    b = Distribution(((0,), (1,)), np.array([0.75, 0.25]))
    assert hellinger(a, b) == pytest.approx(0.13052619222005159, abs=1e-15)
    assert hellinger(b, a) == hellinger(a, b)


# ---------------------------------------------------------------- conditionals


def test_conditional_probability_high_temperature_is_even():
    bm = load_fixture("and_gate")
    dist = conditional_probability(bm, 1e-9, (1, 0))
    assert dist.prob((0,)) == pytest.approx(0.5, abs=1e-6)


def test_and_fixture_conditional_sharpens_with_beta():
    bm = load_fixture("and_gate")
    dist = conditional_probability(bm, 10.0, (1, 1))
    assert dist.prob((1,)) > 0.9


def test_conditional_requires_output_nodes(rng):
    bm = random_machine(3, 0, 1, rng)
    with pytest.raises(ValueError):
        conditional_probability(bm, 1.0, (0, 1, 0))


def test_ncll_high_temperature_limit(rng):
    ds = logic_gate("OR")
    bm = random_machine(2, 1, 2, rng)
    value = negative_conditional_log_likelihood(bm, 1e-9, ds)
    assert value == pytest.approx(4 * np.log(2), abs=1e-5)


def test_ncll_matches_sum_of_conditionals():
    bm = load_fixture("adder_function")
    ds = __import__("isingbm").datasets.adder2()
    total = 0.0
    for d in range(ds.num_rows):
        cond = conditional_probability(bm, 5.0, ds.input_part(d))
        total -= np.log(cond.prob(ds.output_part(d)))
    assert negative_conditional_log_likelihood(bm, 5.0, ds) == pytest.approx(total, rel=1e-12)


def test_ncll_requires_split(rng):
    bm = random_machine(2, 1, 1, rng)
    ds = from_rows([(0, 0, 0), (1, 1, 1)])
    with pytest.raises(ValueError):
        negative_conditional_log_likelihood(bm, 1.0, ds)


# ---------------------------------------------------------------- temperature analysis


def test_beta_derivatives_zero_for_flat_machine():
    ds = from_rows([(0, 0), (1, 1)])
    first, second = dkl_beta_derivatives(uniform_machine(2), 1.0, ds)
    assert first == 0.0 and second == 0.0


@pytest.mark.parametrize("beta", [0.7, 1.0, 2.5])
def test_beta_derivatives_match_finite_differences(rng, beta):
    bm = random_machine(3, 0, 2, rng)
    ds = from_rows([(0, 0, 0), (1, 0, 1), (1, 1, 1)], [0.2, 0.5, 0.3])
    q = dataset_distribution(ds)
    first, second = dkl_beta_derivatives(bm, beta, ds)
    h = 1e-4
    f = lambda b: kl_divergence(q, visible_marginal(bm, b))
    fd1 = (f(beta + h) - f(beta - h)) / (2 * h)
    fd2 = (f(beta + h) - 2 * f(beta) + f(beta - h)) / h**2
    assert first == pytest.approx(fd1, rel=1e-4)
    assert second == pytest.approx(fd2, rel=1e-3)


def test_second_derivative_nonnegative_where_model_matches_data(rng):
    # when the data IS the model marginal, the curvature reduces to a variance
    bm = random_machine(3, 0, 2, rng)
    beta0 = 1.4
    marginal = visible_marginal(bm, beta0)
    ds = from_rows(list(marginal.support), marginal.probs)
    _, second = dkl_beta_derivatives(bm, beta0, ds)
    assert second >= -1e-12


def test_ground_state_curve_flat_machine():
    curve = ground_state_probability_curve(uniform_machine(3), [0.5, 1.0, 2.0])
    assert all(p == 1.0 for _, p in curve)


def test_ground_state_curve_single_node_closed_form():
    bm = BoltzmannMachine(1, 0, 0, np.array([1.0]), {})
    curve = dict(ground_state_probability_curve(bm, [1.0, 2.0]))
    assert curve[1.0] == pytest.approx(0.7310585786300049)
    assert curve[2.0] == pytest.approx(0.8807970779778824)
    assert curve[2.0] > curve[1.0]


def test_ground_state_curve_xor_fixture_increases_to_one():
    bm = load_fixture("xor_ground_state")
    curve = ground_state_probability_curve(bm, np.geomspace(0.1, 10, 30))
    probs = [p for _, p in curve]
    assert np.all(np.diff(probs) > 0)
    assert probs[-1] > 0.85


def test_ground_state_log_derivative_identity(rng):
    # d ln P(ground) / d beta == E[E] - E_min, against finite differences
    from isingbm.model import all_energies

    for _ in range(5):
        bm = random_machine(3, 0, 2, rng)
        E = all_energies(bm)
        beta = 1.2
        w = np.exp(-beta * (E - E.min()))
        p = w / w.sum()
        analytic = float(p @ E - E.min())
        h = 1e-5
        log_p = []
        for b in (beta - h, beta + h):
            ww = np.exp(-b * (E - E.min()))
            log_p.append(np.log(ww[np.argmin(E)] / ww.sum()))
        fd = (log_p[1] - log_p[0]) / (2 * h)
        assert analytic == pytest.approx(fd, rel=1e-4)
        assert analytic >= 0.0


# ---------------------------------------------------------------- beta fitting


def test_fit_beta_exhaustive_recovery(rng):
    for _ in range(5):
        bm = random_machine(3, 0, 2, rng)
        beta_true = float(rng.uniform(0.5, 5.0))
        ss = exact_sample(bm, SamplerConfig(beta=beta_true, exhaustive=True))
        beta_star, curve = fit_beta(ss, bm)
        assert beta_star == pytest.approx(beta_true, rel=2e-3)
        assert len(curve) == len(DEFAULT_BETA_GRID)


def test_fit_beta_single_node_self_consistency():
    bm = BoltzmannMachine(1, 0, 0, np.array([1.0]), {})
    ss = exact_sample(bm, SamplerConfig(beta=2.0, num_reads=1_000_000, seed=3))
    beta_star, _ = fit_beta(ss, bm)
    assert beta_star == pytest.approx(2.0, abs=0.1)


def test_fit_beta_empty_grid():
    bm = BoltzmannMachine(1, 0, 0, np.array([1.0]), {})
    ss = exact_sample(bm, SamplerConfig(beta=2.0, exhaustive=True))
    with pytest.raises(ValueError):
        fit_beta(ss, bm, beta_grid=[])


def test_excited_mass_strictly_decreasing(rng):
    bm = random_machine(3, 0, 2, rng)
    mass = excited_mass_curve(bm, np.geomspace(0.1, 10, 40))
    assert np.all(np.diff(mass) < 0)
