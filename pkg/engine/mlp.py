"""
MLP f(X_fea, Θ): прямой проход с dropout и ручной обратный проход
"""
import logging
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np

from shared.validation import LazyGnnError, ValidationError

logger = logging.getLogger(__name__)

Mode = Literal["train", "eval"]


class MissingCacheError(LazyGnnError):
    """Обратный проход без кэша прямого прохода"""
    pass


@dataclass
class MlpParams:
    """
    Веса и смещения слоёв; ReLU между слоями, тождество на выходе
    """
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    dropout_rate: float = 0.0

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValidationError("MLP needs matching, non-empty weight and bias lists")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValidationError(f"Layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValidationError(
                    f"Layer {i}: in-dim {w.shape[0]} != previous out-dim {self.weights[i - 1].shape[1]}"
                )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def tensors(self) -> List[np.ndarray]:
        """Параметры в порядке W0, b0, W1, b1, ..."""
        return [t for pair in zip(self.weights, self.biases) for t in pair]

    def replace_tensors(self, tensors: Sequence[np.ndarray]) -> "MlpParams":
        return MlpParams(
            weights=list(tensors[0::2]),
            biases=list(tensors[1::2]),
            dropout_rate=self.dropout_rate,
        )

    def copy(self) -> "MlpParams":
        return self.replace_tensors([t.copy() for t in self.tensors()])

    def save(self, path):
        """Сохранить в .npz"""
        arrays = {f"t{i}": t for i, t in enumerate(self.tensors())}
        np.savez(path, dropout_rate=np.array(self.dropout_rate), **arrays)

    @classmethod
    def load(cls, path) -> "MlpParams":
        with np.load(path) as data:
            count = sum(1 for key in data.files if key.startswith("t"))
            tensors = [data[f"t{i}"] for i in range(count)]
            dropout = float(data["dropout_rate"])
        return cls(weights=tensors[0::2], biases=tensors[1::2], dropout_rate=dropout)


@dataclass
class MlpGrads:
    """Градиенты по параметрам (та же структура, что у MlpParams)"""
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def tensors(self) -> List[np.ndarray]:
        return [t for pair in zip(self.weights, self.biases) for t in pair]


@dataclass
class ForwardCache:
    """
    Кэш прямого прохода в режиме обучения

    inputs[i] - вход слоя i, pre_activations[i] - его выход до ReLU,
    masks[i] - маска инвертированного dropout после ReLU (None при p = 0)
    """
    inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)
    masks: List[Optional[np.ndarray]] = field(default_factory=list)


def init_mlp(
    dims: Sequence[int],
    dropout_rate: float,
    seed: int,
    dtype: str = "float64",
) -> MlpParams:
    """
    Glorot-uniform веса, нулевые смещения

    Args:
        dims: [in, hidden..., classes]
    """
    if len(dims) < 2:
        raise ValidationError(f"MLP needs at least input and output dims, got {list(dims)}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpParams(weights=weights, biases=biases, dropout_rate=dropout_rate)


def dropout_mask(shape: Tuple[int, int], rate: float, rng: np.random.Generator, dtype) -> np.ndarray:
    """Маска {0, 1/(1 − p)}"""
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / (1.0 - rate)


def mlp_forward(
    params: MlpParams,
    x: np.ndarray,
    mode: Mode = "eval",
    rng_seed: Optional[int] = None,
) -> Tuple[np.ndarray, Optional[ForwardCache]]:
    """
    Прямой проход MLP

    Args:
        params: Параметры
        x: Признаки N×d
        mode: "train" (dropout по seed, возвращается кэш) или "eval"
        rng_seed: Seed масок dropout

    Returns:
        (X_in, cache); в режиме eval cache = None
    """
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ValidationError(f"MLP input must be N x {params.in_dim}, got {x.shape}")
    if mode not in ("train", "eval"):
        raise ValidationError(f"Unknown MLP mode {mode!r}")

    training = mode == "train"
    use_dropout = training and params.dropout_rate > 0.0
    rng = np.random.default_rng(rng_seed) if use_dropout else None
    cache = ForwardCache() if training else None

    h = x
    last = params.num_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        if training:
            cache.inputs.append(h)
            cache.pre_activations.append(z)
        if i == last:
            h = z
            break
        h = np.maximum(z, 0.0)
        mask = dropout_mask(h.shape, params.dropout_rate, rng, h.dtype) if use_dropout else None
        if mask is not None:
            h = h * mask
        if training:
            cache.masks.append(mask)

    return h, cache


def mlp_backward(params: MlpParams, cache: Optional[ForwardCache], grad_out: np.ndarray) -> MlpGrads:
    """
    Обратный проход MLP по кэшу прямого прохода

    Args:
        grad_out: ∂L/∂X_in

    Returns:
        Градиенты по весам и смещениям

    Raises:
        MissingCacheError: Кэш не передан (прямой проход был в режиме eval)
    """
    if cache is None or len(cache.inputs) != params.num_layers:
        raise MissingCacheError("mlp_backward requires the cache of a matching train-mode forward")
    if grad_out.shape != cache.pre_activations[-1].shape:
        raise ValidationError(
            f"grad_out shape {grad_out.shape} != MLP output shape {cache.pre_activations[-1].shape}"
        )

    grad_w: List[np.ndarray] = [None] * params.num_layers
    grad_b: List[np.ndarray] = [None] * params.num_layers

    dz = grad_out
    for i in range(params.num_layers - 1, -1, -1):
        grad_w[i] = cache.inputs[i].T @ dz
        grad_b[i] = dz.sum(axis=0)
        if i == 0:
            break
        dh = dz @ params.weights[i].T
        mask = cache.masks[i - 1]
        if mask is not None:
            dh = dh * mask
        # субградиент ReLU в нуле равен 0
        dz = dh * (cache.pre_activations[i - 1] > 0.0)

    return MlpGrads(weights=grad_w, biases=grad_b)
