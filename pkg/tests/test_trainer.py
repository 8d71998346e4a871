import numpy as np
import pytest
from pydantic import ValidationError as PydanticValidationError

from engine.gradcheck import finite_difference
from engine.losses import softmax_cross_entropy
from engine.mlp import MlpParams, init_mlp, mlp_backward, mlp_forward
from engine.optim import AdamState, adam_step
from engine.propagation import (
    fixed_point_solve,
    implicit_grad_reference,
    lazy_backward,
    lazy_forward,
    lazy_limit_reference,
    propagate_backward,
    propagate_forward,
)
from shared.config import METRICS_HEADER
from shared.dataset import Dataset, load_dataset_dir
from shared.models import Hyperparams, TrainConfig
from shared.sbm import random_graph
from shared.validation import ValidationError
from trainer.metrics import MetricsWriter, read_metrics
from trainer.service import (
    DROPOUT_STREAM,
    LazyGnnTrainer,
    _stream_seed,
    accuracy,
    evaluate,
    redundancy_probe,
    train_full_batch,
    train_mini_batch,
)


def _cfg(**kw) -> TrainConfig:
    base = {"epochs": 5, "hidden": 8, "dropout": 0.0, "lr": 0.01, "seed": 3}
    base.update(kw)
    return TrainConfig.from_flat(base)


def test_redundancy_probe_values():
    a = np.array([[1.0, 0.0]])
    assert redundancy_probe(a, a.copy()) == 0.0
    assert redundancy_probe(a, np.array([[0.0, 1.0]])) == pytest.approx(np.sqrt(2.0))
    with pytest.raises(ValidationError):
        redundancy_probe(np.zeros((1, 2)), a)
    with pytest.raises(ValidationError):
        redundancy_probe(a, np.ones((2, 2)))


def test_epochs_zero_rejected_and_one_record(small_sbm):
    with pytest.raises(PydanticValidationError):
        TrainConfig(epochs=0)
    records = LazyGnnTrainer(small_sbm, _cfg(epochs=1)).train()
    assert len(records) == 1
    assert records[0].epoch == 1 and records[0].iter == 1
    assert records[0].redundancy is None


def test_lr_zero_needs_allow_frozen():
    with pytest.raises(PydanticValidationError):
        TrainConfig(lr=0.0)
    assert TrainConfig(lr=0.0, allow_frozen=True).lr == 0.0


def test_eval_every_keeps_last_epoch(small_sbm):
    records = LazyGnnTrainer(small_sbm, _cfg(epochs=7, eval_every=3)).train()
    assert [r.epoch for r in records] == [3, 6, 7]


def test_runs_are_deterministic(small_sbm):
    def run():
        trainer = LazyGnnTrainer(small_sbm, _cfg(epochs=6, dropout=0.5))
        records = trainer.train()
        return [(r.train_loss, r.val_accuracy, r.redundancy, r.peak_store_bytes) for r in records]

    assert run() == run()


def test_mini_batch_runs_are_deterministic(small_sbm):
    def run():
        return LazyGnnTrainer(small_sbm, _cfg(epochs=3, batch_size=16, dropout=0.5)).train()

    a, b = run(), run()
    assert [(r.train_loss, r.redundancy) for r in a] == [(r.train_loss, r.redundancy) for r in b]


def test_diffusion_identity_matches_mlp_only_run(small_sbm):
    cfg = _cfg(epochs=8, dropout=0.5, alpha=1.0, beta=1.0, gamma=1.0, layers=3)
    trainer = LazyGnnTrainer(small_sbm, cfg)
    trainer.train()

    params = init_mlp([small_sbm.features.shape[1], cfg.hidden, small_sbm.num_classes], cfg.dropout, cfg.seed)
    adam = AdamState.for_params(params, cfg.lr, cfg.weight_decay)
    reference = []
    for k in range(cfg.epochs):
        out, cache = mlp_forward(params, small_sbm.features, "train", _stream_seed(cfg.seed, DROPOUT_STREAM, k))
        loss, grad = softmax_cross_entropy(out, small_sbm.labels, small_sbm.train_mask)
        params = adam_step(adam, params, mlp_backward(params, cache, grad))
        reference.append(loss)

    assert trainer.iteration_losses == reference


def test_frozen_model_has_zero_redundancy_without_laziness(small_sbm):
    cfg = _cfg(epochs=10, lr=0.0, allow_frozen=True, beta=1.0, gamma=1.0)
    trainer = LazyGnnTrainer(small_sbm, cfg)
    before = [t.copy() for t in trainer.params.tensors()]
    trainer.train()
    for a, b in zip(before, trainer.params.tensors()):
        np.testing.assert_array_equal(a, b)
    assert trainer.redundancy_series[0] is None
    assert max(trainer.redundancy_series[1:]) <= 1e-12


def test_frozen_lazy_redundancy_decays(small_sbm):
    cfg = _cfg(epochs=40, lr=0.0, allow_frozen=True, beta=0.5, gamma=0.5)
    trainer = LazyGnnTrainer(small_sbm, cfg)
    trainer.train()
    series = trainer.redundancy_series
    assert series[-1] < 1e-6
    assert series[-1] < series[2]


def _frozen_inputs(dataset, trainer):
    x_in, _ = mlp_forward(trainer.params, dataset.features, "eval")
    return x_in


def test_frozen_history_converges_to_lazy_limit(small_sbm):
    hp = Hyperparams(alpha=0.2, beta=0.5, gamma=0.5, layers=2)
    cfg = _cfg(epochs=200, lr=0.0, allow_frozen=True).model_copy(update={"hp": hp})
    trainer = LazyGnnTrainer(small_sbm, cfg)
    trainer.train()
    x_in = _frozen_inputs(small_sbm, trainer)
    np.testing.assert_allclose(trainer.state.m_fea, lazy_limit_reference(small_sbm.graph, x_in, hp), atol=1e-6)


def test_frozen_history_without_mixing_reaches_fixed_point_and_implicit_grad(small_sbm):
    hp = Hyperparams(alpha=0.2, beta=0.0, gamma=0.0, layers=2)
    cfg = _cfg(epochs=300, lr=0.0, allow_frozen=True).model_copy(update={"hp": hp})
    trainer = LazyGnnTrainer(small_sbm, cfg)
    trainer.train()

    graph = small_sbm.graph
    x_in = _frozen_inputs(small_sbm, trainer)
    x_star = fixed_point_solve(graph, x_in, hp.alpha)
    np.testing.assert_allclose(trainer.state.m_fea, x_star, atol=1e-6)

    _, grad_top = softmax_cross_entropy(x_star, small_sbm.labels, small_sbm.train_mask)
    np.testing.assert_allclose(trainer.state.m_grad, implicit_grad_reference(graph, grad_top, hp.alpha), atol=1e-6)


def test_mini_batch_with_full_coverage_equals_full_batch(small_sbm):
    full = LazyGnnTrainer(small_sbm, _cfg(epochs=50, dropout=0.5))
    full.train()
    mini = LazyGnnTrainer(
        small_sbm, _cfg(epochs=50, dropout=0.5, batch_size=small_sbm.num_nodes, target_pool="all")
    )
    mini.train()
    assert len(mini.iteration_losses) == 50
    np.testing.assert_allclose(mini.iteration_losses, full.iteration_losses, rtol=0, atol=1e-10)
    np.testing.assert_allclose(mini.state.m_fea, full.state.m_fea, atol=1e-10)


def test_batch_of_one_on_path_touches_neighbors_only(toy3_dir):
    dataset = load_dataset_dir(toy3_dir)
    cfg = _cfg(epochs=2, batch_size=1, target_pool="all", hidden=4, layers=1)
    trainer = LazyGnnTrainer(dataset, cfg)
    trainer.train()
    assert len(trainer.closure_sizes) == 6
    assert max(trainer.closure_sizes) <= 3
    assert sorted(set(trainer.closure_sizes)) == [2, 3]
    # шаг оптимизатора только для батча с обучающим узлом 0
    assert len(trainer.iteration_losses) == 2
    assert trainer.iteration == 6


def test_mini_batch_batches_cover_train_pool(small_sbm):
    trainer = LazyGnnTrainer(small_sbm, _cfg(epochs=1, batch_size=10))
    trainer.train()
    num_train = int(small_sbm.train_mask.sum())
    assert trainer.iteration == -(-num_train // 10)
    assert trainer.state.fea_initialized.sum() >= num_train


def test_batch_size_larger_than_graph(small_sbm):
    with pytest.raises(ValidationError):
        LazyGnnTrainer(small_sbm, _cfg(batch_size=small_sbm.num_nodes + 1))


def test_mode_mismatch(small_sbm):
    with pytest.raises(ValidationError):
        LazyGnnTrainer(small_sbm, _cfg()).train_mini_batch()
    with pytest.raises(ValidationError):
        LazyGnnTrainer(small_sbm, _cfg(batch_size=4)).train_full_batch()


def test_module_level_entry_points(small_sbm):
    parts = (small_sbm.graph, small_sbm.features, small_sbm.labels, small_sbm.masks)
    assert len(train_full_batch(*parts, _cfg(epochs=2))) == 2
    assert len(train_mini_batch(*parts, _cfg(epochs=2, batch_size=20))) == 2


def test_appnp_variant_has_no_store(small_sbm):
    trainer = LazyGnnTrainer(small_sbm, _cfg(epochs=2, variant="appnp"))
    records = trainer.train()
    assert trainer.state is None
    assert records[-1].peak_store_bytes == 0


def test_store_bytes_independent_of_layers(small_sbm):
    sizes = {
        LazyGnnTrainer(small_sbm, _cfg(epochs=1, layers=layers)).store_bytes
        for layers in (1, 2, 4, 8)
    }
    assert sizes == {2 * small_sbm.num_nodes * small_sbm.num_classes * 8}


def test_accuracy_extremes():
    logits = np.array([[2.0, 1.0], [0.0, 3.0], [1.0, 1.0]])
    mask = np.ones(3, dtype=bool)
    assert accuracy(logits, np.array([0, 1, 0]), mask) == 1.0
    assert accuracy(logits, np.array([1, 0, 1]), mask) == 0.0
    with pytest.raises(ValidationError):
        accuracy(logits, np.array([0, 1, 0]), np.zeros(3, dtype=bool))


def test_evaluate_with_identity_model():
    graph = random_graph(4, 0.5, seed=0)
    features = np.eye(2)[[0, 1, 1, 0]]
    labels = np.array([0, 1, 1, 0])
    params = MlpParams(weights=[np.eye(2)], biases=[np.zeros(2)])
    cfg = _cfg(alpha=1.0, layers=1)
    mask = np.ones(4, dtype=bool)
    assert evaluate(params, None, graph, features, labels, mask, cfg) == 1.0
    assert evaluate(params, None, graph, features, 1 - labels, mask, cfg) == 0.0


def test_untrained_accuracy_is_chance():
    scores = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        graph = random_graph(60, 0.05, seed=seed)
        features = rng.standard_normal((60, 5))
        labels = rng.permutation(np.repeat([0, 1], 30))
        params = init_mlp([5, 8, 2], 0.0, seed=seed)
        scores.append(evaluate(params, None, graph, features, labels, np.ones(60, dtype=bool), _cfg(seed=seed)))
    assert abs(np.mean(scores) - 0.5) < 0.05


def test_dropout_increases_redundancy(small_sbm):
    def mean_redundancy(dropout):
        trainer = LazyGnnTrainer(small_sbm, _cfg(epochs=50, dropout=dropout))
        trainer.train()
        return np.mean(trainer.redundancy_series[9:50])

    assert mean_redundancy(0.5) > mean_redundancy(0.0)


def test_end_to_end_gradient_matches_finite_differences(small_sbm):
    """Полный конвейер MLP → диффузия → loss при β = γ = 1"""
    alpha, layers = 0.2, 3
    params = init_mlp([small_sbm.features.shape[1], 5, small_sbm.num_classes], 0.0, seed=4)

    def loss(p):
        x_in, _ = mlp_forward(p, small_sbm.features, "train")
        x_l = propagate_forward(small_sbm.graph, x_in, x_in, alpha, layers)
        return softmax_cross_entropy(x_l, small_sbm.labels, small_sbm.train_mask)[0]

    x_in, cache = mlp_forward(params, small_sbm.features, "train")
    x_l = propagate_forward(small_sbm.graph, x_in, x_in, alpha, layers)
    _, grad_top = softmax_cross_entropy(x_l, small_sbm.labels, small_sbm.train_mask)
    analytic = mlp_backward(params, cache, propagate_backward(small_sbm.graph, grad_top, alpha, layers)).tensors()
    numeric = finite_difference(loss, params)

    num = np.concatenate([n.ravel() for n in numeric])
    ana = np.concatenate([a.ravel() for a in analytic])
    assert np.linalg.norm(num - ana) / np.linalg.norm(ana) < 1e-6


def test_metrics_writer(tmp_path, small_sbm):
    path = tmp_path / "metrics.csv"
    with MetricsWriter(path) as writer:
        LazyGnnTrainer(small_sbm, _cfg(epochs=3), metrics=writer).train()
    assert path.read_text().splitlines()[0] == ",".join(METRICS_HEADER)
    rows = read_metrics(path)
    assert [int(r["epoch"]) for r in rows] == [1, 2, 3]
    assert rows[0]["redundancy"] is None
    assert rows[1]["redundancy"] >= 0.0


def test_empty_train_mask_rejected(small_sbm):
    _, val, test = small_sbm.masks
    dataset = Dataset(small_sbm.graph, small_sbm.features, small_sbm.labels, np.zeros_like(val), val, test)
    with pytest.raises(ValidationError):
        LazyGnnTrainer(dataset, _cfg())


def _tiny_problem(num_nodes: int = 24, seed: int = 5):
    rng = np.random.default_rng(seed)
    graph = random_graph(num_nodes, 0.2, seed=seed)
    features = rng.standard_normal((num_nodes, 4))
    labels = rng.integers(0, 3, size=num_nodes)
    mask = np.ones(num_nodes, dtype=bool)
    return graph, features, labels, mask


def _lazy_gradient_error(hp: Hyperparams) -> float:
    """Относительная ошибка ∂L/∂Θ через lazy_forward/lazy_backward без истории против конечных разностей"""
    graph, features, labels, mask = _tiny_problem()
    params = init_mlp([4, 6, 3], 0.3, seed=8)
    dropout_seed = 17
    zeros = np.zeros((graph.num_nodes, 3))

    def loss(p):
        x_in, _ = mlp_forward(p, features, "train", dropout_seed)
        x_l = lazy_forward(graph, zeros, x_in, hp)
        return softmax_cross_entropy(x_l, labels, mask)[0]

    x_in, cache = mlp_forward(params, features, "train", dropout_seed)
    x_l = lazy_forward(graph, zeros, x_in, hp)
    _, grad_top = softmax_cross_entropy(x_l, labels, mask)
    grad_in = lazy_backward(graph, zeros, grad_top, hp)
    analytic = mlp_backward(params, cache, grad_in).tensors()
    numeric = finite_difference(loss, params)

    num = np.concatenate([n.ravel() for n in numeric])
    ana = np.concatenate([a.ravel() for a in analytic])
    return float(np.linalg.norm(num - ana) / np.linalg.norm(ana))


def test_lazy_gradient_without_history_deep_diffusion():
    hp = Hyperparams(alpha=0.5, beta=1.0, gamma=1.0, layers=100)
    assert _lazy_gradient_error(hp) < 1e-4


@pytest.mark.parametrize("layers", [1, 7, 100])
def test_lazy_gradient_identity_diffusion(layers):
    hp = Hyperparams(alpha=1.0, beta=1.0, gamma=1.0, layers=layers)
    assert _lazy_gradient_error(hp) < 1e-6


def test_float32_training_and_converged_evaluation(small_sbm):
    trainer = LazyGnnTrainer(small_sbm, _cfg(epochs=3, dtype="float32"))
    records = trainer.train()
    assert trainer.state.m_fea.dtype == np.float32
    assert np.isfinite(records[-1].train_loss)
    score = trainer.evaluate_converged(small_sbm.test_mask)
    assert 0.0 <= score <= 1.0


def test_mini_batch_step_writes_only_target_rows(small_sbm):
    trainer = LazyGnnTrainer(small_sbm, _cfg(epochs=1, batch_size=6, layers=2))
    rng = np.random.default_rng(0)
    state = trainer.state
    state.m_fea[:] = rng.standard_normal(state.m_fea.shape)
    state.m_grad[:] = rng.standard_normal(state.m_grad.shape)
    state.fea_initialized[:] = True
    state.grad_initialized[:] = True
    fea_before, grad_before = state.m_fea.copy(), state.m_grad.copy()

    targets = np.flatnonzero(small_sbm.train_mask)[:6]
    assert trainer.mini_batch_step(targets) is not None
    assert trainer.closure_sizes[-1] > len(targets)

    outside = np.ones(small_sbm.num_nodes, dtype=bool)
    outside[targets] = False
    np.testing.assert_array_equal(state.m_fea[outside], fea_before[outside])
    np.testing.assert_array_equal(state.m_grad[outside], grad_before[outside])
    assert not np.array_equal(state.m_fea[targets], fea_before[targets])
    assert not np.array_equal(state.m_grad[targets], grad_before[targets])
