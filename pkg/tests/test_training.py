import numpy as np
import pytest

from isingbm.datasets import from_rows, logic_gate, two_phase
from isingbm.metrics import (
    conditional_probability,
    dataset_distribution,
    kl_divergence,
    negative_conditional_log_likelihood,
    visible_marginal,
)
from isingbm.model import BoltzmannMachine, random_machine
from isingbm.samplers import Backend, SamplerConfig
from isingbm.training import (
    Architecture,
    GradientEstimate,
    GradientMode,
    TrainingConfig,
    TrainingTrace,
    TraceRecord,
    finite_difference_gradient,
    grad_dkl,
    grad_ncll,
    momentum_update,
    train_distribution,
    train_function_approximator,
)


def rel_err(fd: GradientEstimate, grad: GradientEstimate) -> float:
    """Max component error relative to the gradient's own scale."""
    scale = max(grad.linf(), 1e-12)
    err_b = np.max(np.abs(fd.d_bias - grad.d_bias), initial=0.0)
    err_p = np.max(np.abs(fd.d_pair - grad.d_pair), initial=0.0)
    return max(err_b, err_p) / scale


# ---------------------------------------------------------------- momentum update


def test_momentum_update_plain_gradient_step():
    cfg = TrainingConfig(eta=0.1, weight_decay=0.0, momentum=0.0)
    theta_new, delta = momentum_update(np.array([0.5]), np.array([0.2]), np.array([0.0]), cfg)
    assert theta_new[0] == pytest.approx(0.48)
    assert delta[0] == pytest.approx(-0.02)


def test_momentum_update_carries_previous_delta():
    cfg = TrainingConfig(eta=0.1, weight_decay=0.0, momentum=0.5)
    theta_new, delta = momentum_update(np.array([0.5]), np.array([0.2]), np.array([-0.1]), cfg)
    assert delta[0] == pytest.approx(-0.07)
    assert theta_new[0] == pytest.approx(0.43)


def test_momentum_update_clips_parameters_not_memory():
    cfg = TrainingConfig(eta=1.0, weight_decay=0.0, momentum=0.0)
    theta_new, delta = momentum_update(np.array([0.9]), np.array([-0.4]), np.array([0.0]), cfg, bound=1.0)
    assert theta_new[0] == 1.0          # candidate 1.3 clipped to the cap
    assert delta[0] == pytest.approx(0.4)  # memory keeps the unclipped step


def test_momentum_update_weight_decay_not_scaled_by_eta():
    cfg = TrainingConfig(eta=0.5, weight_decay=0.01, momentum=0.0)
    _, delta = momentum_update(np.array([1.0]), np.array([0.0]), np.array([0.0]), cfg)
    assert delta[0] == pytest.approx(-0.01)


def test_training_config_validation():
    with pytest.raises(ValueError):
        TrainingConfig(eta=0.0)
    with pytest.raises(ValueError):
        TrainingConfig(momentum=1.0)
    with pytest.raises(ValueError):
        TrainingConfig(weight_decay=-0.1)
    with pytest.raises(ValueError):
        TrainingConfig(enforce_recommended_ranges=True, weight_decay=0.1)
    with pytest.raises(ValueError):
        TrainingConfig(enforce_recommended_ranges=True, momentum=0.95)
    TrainingConfig(enforce_recommended_ranges=True, weight_decay=1e-4, momentum=0.9)


# ---------------------------------------------------------------- gradient oracles


def test_grad_dkl_matches_finite_differences(rng):
    bm = random_machine(3, 0, 2, rng)
    ds = from_rows([(0, 0, 0), (1, 1, 0), (0, 1, 1)], [0.5, 0.3, 0.2])
    q = dataset_distribution(ds)
    grad = grad_dkl(bm, ds, GradientMode.EXACT, SamplerConfig(beta=1.0))
    fd = finite_difference_gradient(lambda m: kl_divergence(q, visible_marginal(m, 1.0)), bm)
    assert rel_err(fd, grad) <= 1e-6


def test_grad_dkl_beta_enters_through_expectations(rng):
    # analytic gradient drops the overall beta prefactor: FD(beta)/beta matches
    bm = random_machine(2, 0, 2, rng)
    ds = from_rows([(0, 1), (1, 1)], [0.4, 0.6])
    q = dataset_distribution(ds)
    beta = 2.5
    grad = grad_dkl(bm, ds, GradientMode.EXACT, SamplerConfig(beta=beta))
    fd = finite_difference_gradient(lambda m: kl_divergence(q, visible_marginal(m, beta)), bm)
    scaled = GradientEstimate(fd.d_bias / beta, fd.pairs, fd.d_pair / beta)
    assert rel_err(scaled, grad) <= 1e-6


def test_grad_dkl_visible_bias_is_mean_difference(rng):
    # d/d(bias_i) reduces to (data mean of s_i) - (model mean of s_i)
    bm = random_machine(2, 0, 0, rng)
    ds = from_rows([(0, 1), (1, 1)], [0.25, 0.75])
    grad = grad_dkl(bm, ds, GradientMode.EXACT, SamplerConfig(beta=1.0))
    joint = visible_marginal(bm, 1.0).as_dict()
    for i in range(2):
        data_mean = sum(w * ds.row(d)[i] for d, w in ((0, 0.25), (1, 0.75)))
        model_mean = sum(p * s[i] for s, p in joint.items())
        assert grad.d_bias[i] == pytest.approx(data_mean - model_mean, abs=1e-12)


def test_grad_dkl_zero_at_stationary_point(rng):
    bm = random_machine(3, 0, 1, rng)
    marginal = visible_marginal(bm, 1.0)
    ds = from_rows(list(marginal.support), marginal.probs)
    grad = grad_dkl(bm, ds, GradientMode.EXACT, SamplerConfig(beta=1.0))
    assert grad.linf() < 1e-12


def test_grad_ncll_matches_finite_differences(rng):
    bm = random_machine(2, 1, 1, rng)
    ds = logic_gate("XOR")
    grad = grad_ncll(bm, ds, GradientMode.EXACT, SamplerConfig(beta=1.0))
    fd = finite_difference_gradient(
        lambda m: negative_conditional_log_likelihood(m, 1.0, ds), bm)
    assert rel_err(fd, grad) <= 1e-6


def test_grad_ncll_input_input_couplings_cancel(rng):
    # both phases clamp every input, so input-input terms are identical constants
    bm = random_machine(2, 1, 1, rng)
    ds = logic_gate("AND")
    grad = grad_ncll(bm, ds, GradientMode.EXACT, SamplerConfig(beta=1.0))
    assert grad.coupling_dict()[(0, 1)] == 0.0
    assert np.all(grad.d_bias[:2] == 0.0)  # input biases cancel too


def test_grad_ncll_zero_when_conditional_matches_data():
    # sharp machine whose conditional is essentially the AND map
    from isingbm.datasets import load_fixture

    bm = load_fixture("and_gate")
    ds = logic_gate("AND")
    grad = grad_ncll(bm, ds, GradientMode.EXACT, SamplerConfig(beta=25.0))
    assert grad.linf() < 1e-3


def test_finite_difference_gradient_on_quadratic():
    bm = BoltzmannMachine(2, 0, 0, np.array([0.3, -0.2]), {(0, 1): 0.5})

    def loss(m):
        return float(np.sum(m.biases**2) + sum(v**2 for v in m.couplings.values()))

    fd = finite_difference_gradient(loss, bm, step=1e-5)
    assert np.allclose(fd.d_bias, [0.6, -0.4], atol=1e-9)
    assert fd.d_pair[0] == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------- sampled gradients


def test_sampled_gradient_with_exhaustive_draws_equals_exact(rng):
    bm = random_machine(3, 0, 2, rng)
    ds = from_rows([(0, 0, 0), (1, 1, 0), (0, 1, 1)])
    exact = grad_dkl(bm, ds, GradientMode.EXACT, SamplerConfig(beta=1.2))
    cfg = SamplerConfig(beta=1.2, exhaustive=True, backend=Backend.EXACT)
    sampled = grad_dkl(bm, ds, GradientMode.SAMPLED, cfg, clamped_resample="always")
    assert rel_err(sampled, exact) <= 1e-10


def test_sampled_gradient_error_shrinks_with_reads(rng):
    bm = random_machine(3, 0, 1, rng)
    ds = from_rows([(0, 0, 0), (1, 1, 1)])
    exact = grad_dkl(bm, ds, GradientMode.EXACT, SamplerConfig(beta=1.0))
    errors = {}
    for reads in (200, 8000):
        per_seed = []
        for seed in range(5):
            cfg = SamplerConfig(beta=1.0, num_reads=reads, seed=seed)
            sampled = grad_dkl(bm, ds, GradientMode.SAMPLED, cfg)
            per_seed.append(
                max(np.max(np.abs(sampled.d_bias - exact.d_bias)),
                    np.max(np.abs(sampled.d_pair - exact.d_pair))))
        errors[reads] = np.median(per_seed)
    assert errors[8000] < errors[200]


def test_sampled_ncll_with_exhaustive_draws_equals_exact(rng):
    bm = random_machine(2, 1, 1, rng)
    ds = logic_gate("OR")
    exact = grad_ncll(bm, ds, GradientMode.EXACT, SamplerConfig(beta=1.0))
    cfg = SamplerConfig(beta=1.0, exhaustive=True, backend=Backend.EXACT)
    sampled = grad_ncll(bm, ds, GradientMode.SAMPLED, cfg)
    assert rel_err(sampled, exact) <= 1e-10


def test_sampler_call_budget(rng):
    # distribution gradient: one full draw plus at most one clamped draw per row;
    # conditional-likelihood gradient: exactly two clamped draws per row
    bm = random_machine(3, 0, 1, rng)
    ds = from_rows([(0, 0, 0), (1, 1, 1), (0, 1, 0)])
    counter: dict = {}
    grad_dkl(bm, ds, GradientMode.SAMPLED, SamplerConfig(beta=1.0, num_reads=50, seed=0),
             clamped_resample="auto", call_counter=counter)
    assert counter.get("full", 0) == 1
    assert counter.get("clamped", 0) <= ds.num_rows

    counter = {}
    grad_dkl(bm, ds, GradientMode.SAMPLED, SamplerConfig(beta=1.0, num_reads=50, seed=0),
             clamped_resample="always", call_counter=counter)
    assert counter == {"full": 1, "clamped": ds.num_rows}

    bm_io = random_machine(2, 1, 1, rng)
    counter = {}
    grad_ncll(bm_io, logic_gate("AND"), GradientMode.SAMPLED,
              SamplerConfig(beta=1.0, num_reads=50, seed=0), call_counter=counter)
    assert counter == {"clamped": 8}


def test_clamped_reuse_skips_rows_seen_in_full_draw(rng):
    # a huge draw on a small machine sees every visible row, so policy "auto"
    # never issues clamped draws
    bm = random_machine(2, 0, 1, rng)
    ds = from_rows([(0, 0), (1, 1)])
    counter: dict = {}
    grad_dkl(bm, ds, GradientMode.SAMPLED, SamplerConfig(beta=0.5, num_reads=20000, seed=0),
             clamped_resample="auto", call_counter=counter)
    assert counter == {"full": 1}


# ---------------------------------------------------------------- training loops


def test_train_stops_quickly_at_stationary_start(rng):
    seed_bm = random_machine(3, 0, 1, rng)
    marginal = visible_marginal(seed_bm, 1.0)
    ds = from_rows(list(marginal.support), marginal.probs)
    cfg = TrainingConfig(eta=0.1, weight_decay=0.0, momentum=0.0, max_steps=100,
                         delta_theta_min=1e-6, init_model=seed_bm,
                         sampler=SamplerConfig(beta=1.0))
    bm, trace = train_distribution(ds, Architecture(3, 0, 1), cfg)
    assert trace.num_steps <= 3
    assert trace.final_loss < 1e-10


def test_monotone_descent_with_small_eta():
    ds = from_rows(logic_gate("AND").rows)
    cfg = TrainingConfig(eta=1e-3, weight_decay=0.0, momentum=0.0, max_steps=120,
                         sampler=SamplerConfig(beta=1.0), seed=0, loss_every=1)
    _, trace = train_distribution(ds, Architecture(3, 0, 1), cfg)
    losses = [r.loss for r in trace.records]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_parameters_respect_bounds_throughout(rng):
    ds = from_rows(logic_gate("AND").rows)
    cfg = TrainingConfig(eta=0.5, weight_decay=0.0, momentum=0.6, max_steps=60,
                         h_max=0.3, j_max=0.2, sampler=SamplerConfig(beta=5.0),
                         seed=1, loss_every=60)
    bm, _ = train_distribution(ds, Architecture(3, 0, 1), cfg)
    assert np.all(np.abs(bm.biases) <= 0.3 + 1e-15)
    assert all(abs(v) <= 0.2 + 1e-15 for v in bm.couplings.values())


def test_train_distribution_reduces_loss(rng):
    ds = from_rows(logic_gate("AND").rows)
    cfg = TrainingConfig(eta=0.1, weight_decay=1e-5, momentum=0.6, max_steps=300,
                         sampler=SamplerConfig(beta=3.0), seed=0, loss_every=100)
    bm, trace = train_distribution(ds, Architecture(3, 0, 1), cfg)
    assert trace.final_loss < trace.initial_loss / 3


def test_train_two_phase_distribution():
    ds = two_phase(10)
    cfg = TrainingConfig(eta=0.1, weight_decay=1e-5, momentum=0.6, max_steps=60,
                         sampler=SamplerConfig(beta=2.0), seed=0, loss_every=30)
    bm, trace = train_distribution(ds, Architecture(10, 0, 8), cfg)
    assert trace.final_loss < trace.initial_loss / 10
    marginal = visible_marginal(bm, 2.0).as_dict()
    top11 = {s for s, _ in sorted(marginal.items(), key=lambda kv: -kv[1])[:11]}
    data_rows = {ds.row(d) for d in range(ds.num_rows)}
    assert top11 == data_rows


def test_train_function_approximator_xor(rng):
    ds = logic_gate("XOR")
    beta = 12.0
    cfg = TrainingConfig(eta=0.1, weight_decay=1e-5, momentum=0.6, max_steps=1000,
                         sampler=SamplerConfig(beta=beta), seed=0, loss_every=500)
    bm, trace = train_function_approximator(ds, Architecture(2, 1, 1), cfg)
    for d in range(ds.num_rows):
        cond = conditional_probability(bm, beta, ds.input_part(d))
        assert cond.prob(ds.output_part(d)) >= 0.75
    assert trace.final_loss < trace.initial_loss


def test_trained_and_approximator_conditionals_rise_with_beta():
    ds = logic_gate("AND")
    cfg = TrainingConfig(eta=0.1, weight_decay=1e-5, momentum=0.6, max_steps=600,
                         sampler=SamplerConfig(beta=3.0), seed=1, loss_every=300)
    bm, _ = train_function_approximator(ds, Architecture(2, 1, 1), cfg)
    minima = []
    for beta in (1.0, 2.0, 4.0, 7.0, 10.0):
        conds = [conditional_probability(bm, beta, ds.input_part(d)).prob(ds.output_part(d))
                 for d in range(ds.num_rows)]
        minima.append(min(conds))
    assert all(b > a for a, b in zip(minima, minima[1:]))


def test_train_function_requires_matching_split():
    ds = logic_gate("AND")
    cfg = TrainingConfig(max_steps=2)
    with pytest.raises(ValueError):
        train_function_approximator(ds, Architecture(3, 0, 1), cfg)


def test_sampled_mode_training_runs(rng):
    ds = from_rows(logic_gate("OR").rows)
    cfg = TrainingConfig(eta=0.1, weight_decay=1e-5, momentum=0.6, max_steps=15,
                         gradient_mode=GradientMode.SAMPLED,
                         sampler=SamplerConfig(beta=2.0, num_reads=400, burn_in=50,
                                               thinning=2, backend=Backend.GIBBS,
                                               num_chains=4),
                         seed=0, loss_every=5)
    bm, trace = train_distribution(ds, Architecture(3, 0, 1), cfg)
    assert trace.num_steps == 15
    assert np.isfinite(trace.final_loss)
    assert all(r.sampler_calls_full == 1 for r in trace.records[1:])


def test_training_config_json_round_trip():
    cfg = TrainingConfig(eta=0.05, weight_decay=1e-4, momentum=0.3, max_steps=77,
                         gradient_mode=GradientMode.SAMPLED,
                         sampler=SamplerConfig(beta=2.5, num_reads=123,
                                               backend=Backend.GIBBS, num_chains=3),
                         init_range=0.2, seed=9, loss_every=7)
    doc = cfg.to_dict()
    assert doc["gradient_mode"] == "sampled"
    assert doc["sampler"]["backend"] == "gibbs"
    restored = TrainingConfig.from_dict(doc)
    assert restored == cfg


# ---------------------------------------------------------------- trace


def test_trace_requires_increasing_steps():
    with pytest.raises(ValueError):
        TrainingTrace((TraceRecord(0, 1.0, 0.0, 0.0), TraceRecord(0, 0.5, 0.0, 0.1)))


def test_trace_csv_export(tmp_path):
    trace = TrainingTrace((TraceRecord(0, 1.5, float("nan"), 0.0),
                           TraceRecord(1, 0.5, 0.25, 0.1)))
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "step,loss,delta_inf,seconds"
    assert lines[2].startswith("1,0.5,0.25,")
