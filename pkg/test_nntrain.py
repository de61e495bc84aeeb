# -*- coding: utf-8 -*-
"""
组合网络训练测试：梯度检查、正则化等价性、平稳组合收敛与检查点
"""

import numpy as np
import pytest

from src.augment import optimal_strength
from src.errors import ConfigError, DataError, SizeMismatch
from src.nntrain import (
    Adam, LossDraws, MlpModel, TrainConfig, TrainingSet, build_training_set, flatten_grads,
    load_model, loss_and_grad, loss_components, numerical_gradient, sample_draws, save_model,
    stationary_training_set, train
)
from src.procgen import GbmParams, simulate_gbm
from src.rng import NoiseSource


def _batch(n: int = 12, window: int = 3, seed: int = 0, input_noise: float = 0.05) -> TrainingSet:
    rng = NoiseSource(seed).generator('batch')
    return TrainingSet(
        inputs=0.1 * rng.standard_normal((n, window)),
        targets=0.1 * rng.standard_normal(n),
        target_var=0.01 * (1.0 + rng.random(n)),
        input_std=input_noise * np.ones((n, window)),
    )


def _draws(batch: TrainingSet, k: int, seed: int = 1) -> LossDraws:
    rng = NoiseSource(seed).generator('draws')
    return LossDraws(inputs=rng.standard_normal((k, len(batch), batch.window)),
                     targets=rng.standard_normal((k, len(batch))))


@pytest.mark.parametrize('objective,head', [
    ('sampled-aug', 'identity'),
    ('regularized', 'identity'),
    ('full', 'identity'),
    ('full', 'box'),
])
def test_analytic_gradient_matches_finite_differences(objective, head):
    batch = _batch()
    model = MlpModel.create((3, 5, 4, 1), head=head, seed=2)
    # 非零偏置让隐层预激活避开 ReLU 的折点
    rng = NoiseSource(4).generator('bias')
    for key in [k for k in model.params if k.startswith('b')]:
        model.params[key] = 0.5 * rng.standard_normal(model.params[key].shape)
    config = TrainConfig(lam=1.0, objective=objective, n_draws=4, weight_decay=0.01)
    draws = _draws(batch, 4)

    _, grads = loss_and_grad(model, batch, config, draws)
    analytic = flatten_grads(grads)
    numeric = numerical_gradient(model, batch, config, draws, step=1e-5)

    error = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    assert error <= 1e-4


def test_sampled_risk_matches_regularized_risk_without_input_noise():
    batch = _batch(n=16, input_noise=0.0)
    model = MlpModel.create((3, 8, 1), head='identity', seed=5)
    k = 10_000
    draws = _draws(batch, k, seed=9)

    sampled = loss_components(model, batch, TrainConfig(objective='sampled-aug', n_draws=k), draws)
    regularized = loss_components(model, batch, TrainConfig(objective='regularized'), draws)

    pi = model.forward(batch.inputs)
    per_example = pi ** 2 * batch.target_var
    se = np.sqrt(np.sum(per_example ** 2 * 2.0 / (k - 1))) / len(batch)
    assert abs(sampled['risk'] - regularized['risk_future']) <= 3.0 * se
    assert regularized['risk'] == pytest.approx(np.mean(per_example))


def test_full_objective_accounts_for_input_noise():
    batch = _batch(n=16, input_noise=0.05)
    model = MlpModel.create((3, 8, 1), head='identity', seed=5)
    k = 10_000
    draws = _draws(batch, k, seed=10)

    sampled = loss_components(model, batch, TrainConfig(objective='sampled-aug', n_draws=k), draws)
    full = loss_components(model, batch, TrainConfig(objective='full'), draws)

    assert full['risk_past'] > 0.0
    assert sampled['risk'] == pytest.approx(full['risk'], rel=0.05)


def test_stationary_model_converges_to_merton():
    model = GbmParams(s0=1.0, r=0.005, sigma=0.01)
    series = simulate_gbm(model, 400, NoiseSource(13))
    profile = optimal_strength('proposed', series, model)
    dataset = stationary_training_set(series, profile)
    n = len(dataset)
    lam = 10.0
    config = TrainConfig(lam=lam, objective='regularized', minibatch=n, steps=3000, learning_rate=0.01)

    trained, trace = train(dataset, config, model=MlpModel.stationary(0.0, 'identity'))
    target = model.r / (lam * model.sigma ** 2)
    assert trained.forward(np.zeros(0)) == pytest.approx(target, rel=0.02)
    assert np.all(np.isfinite(trace))


def test_training_reduces_loss(gbm_series):
    dataset = build_training_set(gbm_series, 10, 'proposed', 10.0)
    config = TrainConfig(lam=5.0, steps=400, learning_rate=1e-2, hidden=(16,), seed=1)
    _, trace = train(dataset, config)
    assert trace[-50:].mean() < trace[:50].mean()


def test_build_training_set_shapes_and_variances(gbm_series):
    window = 10
    plain = build_training_set(gbm_series, window)
    additive = build_training_set(gbm_series, window, 'additive', 0.05)
    proposed = build_training_set(gbm_series, window, 'proposed', 10.0)

    n = len(gbm_series) - 1 - window
    for dataset in (plain, additive, proposed):
        assert dataset.inputs.shape == (n, window)
        assert dataset.targets.shape == (n,)
    np.testing.assert_array_equal(plain.target_var, 0.0)

    prices = gbm_series.prices
    expected = 2.0 * 0.05 ** 2 / prices[window:-1] ** 2
    np.testing.assert_allclose(additive.target_var, expected)
    assert np.all(proposed.target_var >= 0.0)
    assert np.all(proposed.input_std > 0.0)


def test_sample_draws_shapes():
    batch = _batch(n=5)
    rng = NoiseSource(0).generator('d')
    assert sample_draws(batch, TrainConfig(objective='regularized', n_draws=6), rng).inputs.shape == (6, 5, 3)

    clean = TrainingSet(batch.inputs, batch.targets, batch.target_var, np.zeros_like(batch.inputs))
    assert sample_draws(clean, TrainConfig(objective='regularized', n_draws=6), rng).inputs.shape == (1, 5, 3)
    assert sample_draws(clean, TrainConfig(objective='sampled-aug', n_draws=6), rng).targets.shape == (6, 5)


def test_adam_first_step_moves_by_learning_rate():
    params = {'w': np.array([1.0, -1.0])}
    Adam(lr=0.1).step(params, {'w': np.array([3.0, -0.5])})
    np.testing.assert_allclose(params['w'], [0.9, -0.9], rtol=1e-6)


def test_heads_respect_bounds():
    x = NoiseSource(3).generator('x').standard_normal((100, 4)) * 10.0
    box = MlpModel.create((4, 8, 1), head='box', seed=1).forward(x)
    long_only = MlpModel.create((4, 8, 1), head='long-only', seed=1).forward(x)

    assert np.all(np.abs(box) <= 1.0)
    assert np.all((long_only >= 0.0) & (long_only <= 1.0))


def test_checkpoint_round_trip(tmp_path):
    model = MlpModel.create((4, 6, 1), head='box', input_scale=0.02, seed=3)
    path = save_model(model, tmp_path / 'model.json', {'note': 'x'})
    loaded = load_model(path)

    x = NoiseSource(1).generator('x').standard_normal((7, 4)) * 0.01
    np.testing.assert_array_equal(loaded.forward(x), model.forward(x))
    assert loaded.head == 'box'


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / 'other.json'
    path.write_text('{"format": "something-else", "version": 1}', encoding='utf-8')
    with pytest.raises(DataError):
        load_model(path)


def test_config_and_shape_validation():
    with pytest.raises(ConfigError):
        TrainConfig(objective='mse')
    with pytest.raises(ConfigError):
        TrainConfig(objective='sampled-aug', n_draws=1)
    assert TrainConfig(objective='eq13-regularized').objective == 'regularized'

    model = MlpModel.create((3, 4, 1))
    with pytest.raises(SizeMismatch):
        model.forward(np.zeros((2, 5)))
