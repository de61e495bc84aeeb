# -*- coding: utf-8 -*-
"""
神经网络组合模型训练模块

小型前馈网络（ReLU 隐层）直接输出仓位 pi_t，训练目标有三种：
- sampled-aug：对增强分布抽样，直接估计训练目标 E[G] - lambda Var[G]
- regularized：等价正则化形式，收益项 + lambda * s_t * pi_t^2 惩罚
- full：在 regularized 基础上加入输入噪声引起的 lambda * r_t^2 * Var(pi_t) 项

反向传播与 Adam 优化器均为手写实现。
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import orjson
from numpy.lib.stride_tricks import sliding_window_view
from tqdm import tqdm

from src.augment import SchemeKind, StrengthProfile, estimate_volatility, smooth_abs_returns
from src.dataio import PriceSeries, WindowDataset, compute_returns, make_windows
from src.errors import (
    ConfigError, DataError, EmptyBatch, NonFiniteLoss, SizeMismatch
)
from src.rng import NoiseSource

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'augport-mlp'
CHECKPOINT_VERSION = 1

OBJECTIVES = ('sampled-aug', 'regularized', 'full')
HEADS = ('identity', 'box', 'long-only')


@dataclass
class TrainConfig:
    """
    训练配置，默认值与 config/config.py 中的 TRAIN_CONFIG 一致
    """
    lam: float = 1.0
    c: float = 10.0
    objective: str = 'regularized'
    minibatch: int = 64
    steps: int = 1000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    n_draws: int = 8
    tau: int = 20
    seed: int = 0
    hidden: Tuple[int, ...] = (64, 64)
    head: str = 'box'

    def __post_init__(self):
        if self.objective in ('eq13-regularized', 'eq13'):
            self.objective = 'regularized'
        elif self.objective == 'full-three-term':
            self.objective = 'full'
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"未知训练目标: {self.objective}，可选: {OBJECTIVES}")
        if self.learning_rate < 0:
            raise ConfigError(f"学习率不能为负: {self.learning_rate}")
        if self.steps < 1:
            raise ConfigError(f"训练步数必须 >= 1: {self.steps}")
        if self.minibatch < 1:
            raise ConfigError(f"批大小必须 >= 1: {self.minibatch}")
        if self.lam < 0 or self.c < 0 or self.weight_decay < 0:
            raise ConfigError("lambda、c、weight_decay 必须非负")
        if self.objective == 'sampled-aug' and self.n_draws < 2:
            raise ConfigError("sampled-aug 目标需要 n_draws >= 2")


@dataclass(frozen=True)
class TrainingSet:
    """
    收益空间训练集

    Args:
        inputs: 输入收益窗口 (n, L)
        targets: 下一步收益 (n,)
        target_var: 目标收益上的噪声方差 s_t (n,)
        input_std: 输入收益上的噪声标准差 (n, L)
    """
    inputs: np.ndarray
    targets: np.ndarray
    target_var: np.ndarray
    input_std: np.ndarray

    def __post_init__(self):
        n = self.targets.shape[0]
        if n == 0:
            raise EmptyBatch("训练集为空")
        if self.inputs.shape[0] != n or self.target_var.shape != (n,) or self.input_std.shape != self.inputs.shape:
            raise SizeMismatch("训练集各数组形状不一致")

    def __len__(self) -> int:
        return self.targets.shape[0]

    @property
    def window(self) -> int:
        return self.inputs.shape[1]

    @classmethod
    def from_windows(cls, dataset: WindowDataset) -> 'TrainingSet':
        """
        不带增强的训练集
        """
        return cls(dataset.inputs, dataset.targets, np.zeros_like(dataset.targets),
                   np.zeros_like(dataset.inputs))

    def subset(self, index: np.ndarray) -> 'TrainingSet':
        return TrainingSet(self.inputs[index], self.targets[index],
                           self.target_var[index], self.input_std[index])


@dataclass
class LossDraws:
    """
    一次损失计算使用的噪声：输入噪声 (K, b, L) 与目标噪声 (K, b)
    """
    inputs: np.ndarray
    targets: np.ndarray


def _head(u: np.ndarray, head: str) -> np.ndarray:
    if head == 'box':
        return np.tanh(u)
    if head == 'long-only':
        return 0.5 * (np.tanh(0.5 * u) + 1.0)
    return u


def _head_derivative(pi: np.ndarray, head: str) -> np.ndarray:
    if head == 'box':
        return 1.0 - pi ** 2
    if head == 'long-only':
        return pi * (1.0 - pi)
    return np.ones_like(pi)


class MlpModel:
    """
    前馈网络：ReLU 隐层，输出头 identity / box（tanh，[-1,1]）/ long-only（sigmoid，[0,1]）

    输入尺寸为 0 时模型与输入无关，只有一个偏置参数（平稳组合）。
    """

    def __init__(self, sizes: Tuple[int, ...], params: Dict[str, np.ndarray],
                 head: str = 'identity', input_scale: float = 1.0):
        if head not in HEADS:
            raise ConfigError(f"未知输出头: {head}，可选: {HEADS}")
        if len(sizes) < 2 or sizes[-1] != 1:
            raise ConfigError(f"网络结构必须以 1 个输出结尾: {sizes}")
        if not input_scale > 0:
            raise ConfigError(f"输入缩放必须为正: {input_scale}")
        self.sizes = tuple(int(s) for s in sizes)
        self.params = params
        self.head = head
        self.input_scale = float(input_scale)

    @classmethod
    def create(cls, sizes: Tuple[int, ...] = (10, 64, 64, 1), head: str = 'identity',
               input_scale: float = 1.0, seed: int = 0) -> 'MlpModel':
        """
        He 初始化权重，偏置置零
        """
        rng = NoiseSource(seed).generator('init')
        params = {}
        for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            std = np.sqrt(2.0 / fan_in) if fan_in > 0 else 0.0
            params[f'W{layer}'] = rng.standard_normal((fan_in, fan_out)) * std
            params[f'b{layer}'] = np.zeros(fan_out)
        return cls(tuple(sizes), params, head, input_scale)

    @classmethod
    def stationary(cls, value: float = 0.0, head: str = 'identity') -> 'MlpModel':
        """
        输入无关的常数仓位模型
        """
        return cls((0, 1), {'W0': np.zeros((0, 1)), 'b0': np.array([float(value)])}, head)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def copy(self) -> 'MlpModel':
        return MlpModel(self.sizes, {k: v.copy() for k, v in self.params.items()},
                        self.head, self.input_scale)

    def _prepare(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.sizes[0] == 0:
            return np.zeros(x.shape[:-1] + (0,)) if x.ndim else np.zeros((0,))
        if x.shape[-1] != self.sizes[0]:
            raise SizeMismatch(f"输入长度 {x.shape[-1]} 与网络输入尺寸 {self.sizes[0]} 不一致")
        return x / self.input_scale

    def forward(self, x) -> Union[float, np.ndarray]:
        """
        前向计算仓位；单个窗口返回标量，批量输入返回数组
        """
        pi, _ = self._forward_cache(x)
        return float(pi) if np.ndim(pi) == 0 else pi

    def _forward_cache(self, x):
        a = self._prepare(x)
        activations = [a]
        for layer in range(self.n_layers):
            z = a @ self.params[f'W{layer}'] + self.params[f'b{layer}']
            if layer < self.n_layers - 1:
                a = np.maximum(z, 0.0)
                activations.append(a)
            else:
                a = z
        pi = _head(a[..., 0], self.head)
        return pi, activations

    def backward(self, activations: List[np.ndarray], pi: np.ndarray,
                 grad_pi: np.ndarray) -> Dict[str, np.ndarray]:
        """
        由 dL/dpi 反向传播得到各参数梯度（输入为二维批量）
        """
        delta = (grad_pi * _head_derivative(pi, self.head))[:, np.newaxis]
        grads = {}
        for layer in reversed(range(self.n_layers)):
            a_prev = activations[layer]
            grads[f'W{layer}'] = a_prev.T @ delta
            grads[f'b{layer}'] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.params[f'W{layer}'].T) * (activations[layer] > 0)
        return grads

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in sorted(self.params)])

    def set_flat_params(self, flat: np.ndarray):
        offset = 0
        for k in sorted(self.params):
            size = self.params[k].size
            self.params[k] = flat[offset:offset + size].reshape(self.params[k].shape).copy()
            offset += size


class Adam:
    """
    Adam 优化器（带偏差修正），参数与梯度均为 dict
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t

        for k in params:
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])

            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)

            denom = np.sqrt(self.v[k] / bc2) + self.epsilon
            params[k] = params[k] - (self.lr / bc1) * self.m[k] / denom


def build_training_set(series: PriceSeries, window: int, kind: Union[str, SchemeKind] = SchemeKind.NONE,
                       strength: float = 0.0, vol_window: int = 20, tau: int = 20,
                       fold_volatility: bool = False) -> TrainingSet:
    """
    按增强方案构造收益空间训练集

    - proposed：每个收益的噪声方差 c^2 sigma_hat_i^2 |r_hat_i|（|r_hat| 为 tau 平滑），
      目标使用最后一个输入收益的方差
    - additive / naive：价格噪声方差 v_i 经差分后在收益上的方差 (v_i + v_{i+1}) / S_i^2
    - none：不加噪声

    Args:
        series: 训练价格
        window: 窗口长度 L
        kind: 方案
        strength: c、rho 或 rho0
        vol_window: 波动率窗口
        tau: |r| 平滑窗口
        fold_volatility: proposed 方案是否把 sigma_hat 并入 c

    Returns:
        TrainingSet: 训练集
    """
    kind = SchemeKind.parse(kind)
    returns = compute_returns(series)
    dataset = make_windows(returns, window)
    n = len(dataset)
    r = returns.returns

    if kind == SchemeKind.NONE or strength == 0:
        return TrainingSet.from_windows(dataset)

    if kind == SchemeKind.PROPOSED:
        magnitude = smooth_abs_returns(returns, tau)
        sigma_sq = 1.0 if fold_volatility else estimate_volatility(returns, vol_window).sigma_hat ** 2
        variance = strength ** 2 * sigma_sq * magnitude
        input_std = np.sqrt(sliding_window_view(variance, window)[:n])
        target_var = variance[window - 1:window - 1 + n]
    else:
        prices = series.prices
        price_var = np.full_like(prices, strength ** 2) if kind == SchemeKind.ADDITIVE \
            else strength ** 2 * prices ** 2
        variance = (price_var[:-1] + price_var[1:]) / prices[:-1] ** 2
        input_std = np.sqrt(sliding_window_view(variance, window)[:n])
        target_var = variance[window:window + n]

    logger.debug(f"{kind.value} 训练集: {n} 个窗口，平均目标噪声方差 {target_var.mean():.3e}")
    return TrainingSet(dataset.inputs, dataset.targets, target_var.copy(), input_std.copy())


def stationary_training_set(series: PriceSeries, profile: StrengthProfile) -> TrainingSet:
    """
    常数仓位模型的训练集：输入为空，目标噪声方差取 proposed 原始强度折算到收益上的 gamma_t^2 / S_t^2
    """
    returns = compute_returns(series).returns
    n = returns.size
    return TrainingSet(inputs=np.zeros((n, 0)), targets=returns,
                       target_var=profile.raw / series.prices[:-1] ** 2, input_std=np.zeros((n, 0)))


def sample_draws(batch: TrainingSet, config: TrainConfig, rng: np.random.Generator,
                 noise: Optional[NoiseSource] = None) -> LossDraws:
    """
    为一个批次抽取噪声；输入无噪声时 regularized/full 只使用一份原始输入
    """
    noise = noise or NoiseSource(config.seed)
    has_input_noise = bool(np.any(batch.input_std > 0))
    if config.objective == 'sampled-aug':
        k = config.n_draws
    else:
        k = config.n_draws if has_input_noise else 1
    b, L = batch.inputs.shape
    return LossDraws(inputs=noise.sample((k, b, L), rng), targets=noise.sample((k, b), rng))


def _loss_terms(model: MlpModel, batch: TrainingSet, config: TrainConfig, draws: LossDraws,
                need_grad: bool):
    k = draws.inputs.shape[0]
    b = len(batch)
    if b == 0:
        raise EmptyBatch("批次为空")

    noisy = batch.inputs[np.newaxis] + batch.input_std[np.newaxis] * draws.inputs
    flat = noisy.reshape(k * b, batch.window)
    pi_flat, activations = model._forward_cache(flat)
    pi = pi_flat.reshape(k, b)

    y = batch.targets
    s = batch.target_var
    lam = config.lam
    weights_sq = sum(np.sum(model.params[f'W{l}'] ** 2) for l in range(model.n_layers))
    decay = 0.5 * config.weight_decay * weights_sq

    if config.objective == 'sampled-aug':
        y_tilde = y + np.sqrt(np.maximum(s, 0.0)) * draws.targets
        wealth = pi * y_tilde
        mean_wealth = wealth.mean(axis=0)
        gain = mean_wealth.mean()
        risk_total = lam * wealth.var(axis=0, ddof=1).mean()
        terms = {'gain': gain, 'risk': risk_total, 'risk_past': np.nan, 'risk_future': np.nan}
        grad_pi = None
        if need_grad:
            grad_pi = -(y_tilde / k - lam * 2.0 * (wealth - mean_wealth) * y_tilde / (k - 1)) / b
    else:
        gain = np.mean(pi.mean(axis=0) * y)
        risk_future = lam * np.mean(s * np.mean(pi ** 2, axis=0))
        risk_past = 0.0
        if config.objective == 'full' and k > 1:
            risk_past = lam * np.mean(y ** 2 * pi.var(axis=0, ddof=1))
        terms = {'gain': gain, 'risk': risk_future + risk_past,
                 'risk_past': risk_past, 'risk_future': risk_future}
        grad_pi = None
        if need_grad:
            grad_pi = -(y - 2.0 * lam * s * pi) / (b * k)
            if config.objective == 'full' and k > 1:
                grad_pi = grad_pi + lam * y ** 2 * 2.0 * (pi - pi.mean(axis=0)) / ((k - 1) * b)

    terms['weight_decay'] = decay
    terms['loss'] = -(terms['gain'] - terms['risk']) + decay

    grads = None
    if need_grad:
        grads = model.backward(activations, pi_flat, grad_pi.reshape(k * b))
        if config.weight_decay:
            for l in range(model.n_layers):
                grads[f'W{l}'] = grads[f'W{l}'] + config.weight_decay * model.params[f'W{l}']
    return terms, grads


def loss_components(model: MlpModel, batch: TrainingSet, config: TrainConfig,
                    draws: LossDraws) -> Dict[str, float]:
    """
    损失的分项：gain（财富收益）、risk_past（输入噪声导致的仓位方差）、
    risk_future（目标收益噪声）、weight_decay 与总 loss
    """
    terms, _ = _loss_terms(model, batch, config, draws, need_grad=False)
    return {key: float(value) for key, value in terms.items()}


def loss_and_grad(model: MlpModel, batch: TrainingSet, config: TrainConfig,
                  draws: LossDraws) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    损失（负效用）及其解析梯度
    """
    terms, grads = _loss_terms(model, batch, config, draws, need_grad=True)
    return float(terms['loss']), grads


def numerical_gradient(model: MlpModel, batch: TrainingSet, config: TrainConfig,
                       draws: LossDraws, step: float = 1e-5) -> np.ndarray:
    """
    中心差分梯度（按 flat_params 的顺序）
    """
    shifted_model = model.copy()
    base = shifted_model.flat_params()
    grad = np.empty_like(base)
    for i in range(base.size):
        shifted = base.copy()
        shifted[i] = base[i] + step
        shifted_model.set_flat_params(shifted)
        upper = loss_components(shifted_model, batch, config, draws)['loss']
        shifted[i] = base[i] - step
        shifted_model.set_flat_params(shifted)
        lower = loss_components(shifted_model, batch, config, draws)['loss']
        grad[i] = (upper - lower) / (2.0 * step)
    return grad


def flatten_grads(grads: Dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([grads[k].ravel() for k in sorted(grads)])


def train(dataset: Union[TrainingSet, WindowDataset], config: TrainConfig,
          model: Optional[MlpModel] = None, progress: bool = False) -> Tuple[MlpModel, np.ndarray]:
    """
    Adam 小批量训练

    Args:
        dataset: 训练集（WindowDataset 视为无增强）
        config: 训练配置
        model: 初始模型，None 时按窗口长度与 config.hidden 新建
        progress: 是否显示进度条

    Returns:
        Tuple[MlpModel, np.ndarray]: 训练后的模型与逐步损失
    """
    if isinstance(dataset, WindowDataset):
        dataset = TrainingSet.from_windows(dataset)
    if len(dataset) == 0:
        raise EmptyBatch("训练集为空")

    if model is None:
        scale = float(np.std(dataset.inputs)) or 1.0
        model = MlpModel.create((dataset.window, *config.hidden, 1), head=config.head,
                               input_scale=scale, seed=config.seed)
    else:
        model = model.copy()

    noise = NoiseSource(config.seed)
    batch_rng = noise.generator('batch')
    draw_rng = noise.generator('draws')
    optimizer = Adam(config.learning_rate, config.beta1, config.beta2, config.epsilon)

    n = len(dataset)
    size = min(config.minibatch, n)
    trace = np.empty(config.steps)
    steps = range(config.steps)
    if progress:
        steps = tqdm(steps, desc='训练', unit='步')

    for step in steps:
        index = np.arange(n) if size == n else batch_rng.choice(n, size=size, replace=False)
        batch = dataset.subset(index)
        draws = sample_draws(batch, config, draw_rng, noise)
        loss, grads = loss_and_grad(model, batch, config, draws)

        if not np.isfinite(loss):
            raise NonFiniteLoss(step, {
                'loss': loss,
                'param_norm': float(np.linalg.norm(model.flat_params())),
                'grad_norm': float(np.linalg.norm(flatten_grads(grads))),
                'batch_target_var_max': float(batch.target_var.max()),
            })
        trace[step] = loss
        optimizer.step(model.params, grads)

        if (step + 1) % max(1, config.steps // 10) == 0:
            logger.debug(f"第 {step + 1}/{config.steps} 步，loss={loss:.6e}")

    logger.info(f"训练完成: {config.steps} 步，最终 loss={trace[-1]:.6e}")
    return model, trace


def save_model(model: MlpModel, path: Union[str, Path], meta: Optional[dict] = None) -> Path:
    """
    以 JSON 保存模型参数（带格式头与版本号）
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'sizes': list(model.sizes),
        'head': model.head,
        'input_scale': model.input_scale,
        'params': {k: {'shape': list(v.shape), 'values': v.ravel().tolist()}
                   for k, v in sorted(model.params.items())},
        'meta': meta or {},
    }
    path.write_bytes(orjson.dumps(payload, option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2))
    return path


def load_model(path: Union[str, Path]) -> MlpModel:
    """
    读取 save_model 写出的检查点
    """
    path = Path(path)
    try:
        payload = orjson.loads(path.read_bytes())
    except (OSError, orjson.JSONDecodeError) as e:
        raise DataError(f"无法读取模型文件 {path}: {e}")

    if payload.get('format') != CHECKPOINT_FORMAT:
        raise DataError(f"不是模型检查点文件: {path}")
    if payload.get('version') != CHECKPOINT_VERSION:
        raise DataError(f"不支持的检查点版本: {payload.get('version')}")

    params = {k: np.array(v['values'], dtype=float).reshape(v['shape'])
              for k, v in payload['params'].items()}
    return MlpModel(tuple(payload['sizes']), params, payload['head'], payload['input_scale'])


def forward(model: MlpModel, window) -> Union[float, np.ndarray]:
    """
    模型对收益窗口输出的仓位
    """
    return model.forward(window)
