import numpy as np
import pytest

from fedspa import net
from fedspa.errors import ConfigError, DataFormatError, NumericError

from conftest import central_diff, rel_err


class SquaredEmbeddingLoss:
    """0.5 * sum(emb^2): embedding-level loss for zero-path checks."""

    def evaluate(self, logits, emb, labels):
        return 0.5 * float((emb**2).sum()), None, emb.copy()


def _rand_batch(spec, rng, n=7):
    x = rng.random((n, spec.input_dim)).astype(np.float32)
    y = rng.integers(0, spec.num_classes, size=n)
    return net.Batch(inputs=x, labels=y)


def test_spec_validation():
    with pytest.raises(ConfigError):
        net.NetworkSpec(input_dim=4, hidden_dims=[], num_classes=3)
    with pytest.raises(ConfigError):
        net.NetworkSpec(input_dim=4, hidden_dims=[3], num_classes=1)
    with pytest.raises(ConfigError):
        net.NetworkSpec(input_dim=4, hidden_dims=[3], num_classes=3, embedding_layer=1)
    spec = net.NetworkSpec(input_dim=4, hidden_dims=[3, 5], num_classes=3)
    assert spec.embedding_layer == 1
    assert spec.embedding_dim == 5


def test_init_determinism(small_spec):
    a = net.init_params(small_spec, seed=7)
    b = net.init_params(small_spec, seed=7)
    c = net.init_params(small_spec, seed=8)
    assert a.dtype == np.float32
    assert a.size == net.param_count(small_spec)
    assert np.array_equal(a, b)
    assert (a != c).any()


def test_init_biases_zero(small_spec):
    params = net.init_params(small_spec, seed=3)
    for _, b in net.unpack(small_spec, params):
        assert (b == 0).all()


def test_forward_zero_params(small_spec):
    params = np.zeros(net.param_count(small_spec), dtype=np.float32)
    x = np.random.default_rng(0).random((5, small_spec.input_dim)).astype(np.float32)
    assert (net.forward(small_spec, params, x) == 0).all()
    assert (net.embed(small_spec, params, x) == 0).all()


def test_forward_identity_hidden_layer():
    # hidden weights = identity, zero bias: logits for e_1 are the first
    # row of the head weight matrix
    spec = net.NetworkSpec(input_dim=3, hidden_dims=[3], num_classes=4)
    head = np.arange(12, dtype=np.float32).reshape(3, 4)
    params = np.concatenate(
        [np.eye(3, dtype=np.float32).ravel(), np.zeros(3, np.float32), head.ravel(), np.zeros(4, np.float32)]
    )
    e1 = np.zeros((1, 3), dtype=np.float32)
    e1[0, 0] = 1.0
    logits = net.forward(spec, params, e1)
    assert np.array_equal(logits[0], head[0])


def test_forward_rowwise(small_spec):
    params = net.init_params(small_spec, seed=1)
    rng = np.random.default_rng(2)
    x = rng.random((4, small_spec.input_dim)).astype(np.float32)
    dup = np.vstack([x, x[1:2]])
    logits = net.forward(small_spec, params, dup)
    assert np.array_equal(logits[1], logits[4])


def test_forward_dim_mismatch(small_spec):
    params = net.init_params(small_spec, seed=1)
    with pytest.raises(ConfigError):
        net.forward(small_spec, params, np.zeros((2, small_spec.input_dim + 1), np.float32))
    with pytest.raises(ConfigError):
        net.forward(small_spec, params[:-1], np.zeros((2, small_spec.input_dim), np.float32))


def test_embed_shape_and_determinism():
    spec = net.NetworkSpec(input_dim=5, hidden_dims=[4], num_classes=3)
    params = net.init_params(spec, seed=0)
    x = np.random.default_rng(1).random((6, 5)).astype(np.float32)
    e1 = net.embed(spec, params, x)
    e2 = net.embed(spec, params, x)
    assert e1.shape == (6, 4)
    assert np.array_equal(e1, e2)


def test_ce_uniform_softmax(small_spec):
    params = np.zeros(net.param_count(small_spec), dtype=np.float32)
    batch = _rand_batch(small_spec, np.random.default_rng(0))
    value, grads = net.loss_and_param_grads(small_spec, params, batch, net.CrossEntropyLoss())
    assert rel_err(value, np.log(small_spec.num_classes)) < 1e-6
    assert grads.shape == params.shape


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_param_grads_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    spec = net.NetworkSpec(input_dim=4, hidden_dims=[6, 5], num_classes=3)
    params = net.init_params(spec, seed=seed)
    batch = _rand_batch(spec, rng)
    loss = net.CrossEntropyLoss()
    _, grads = net.loss_and_param_grads(spec, params, batch, loss)

    def value_at(p64):
        logits = net.forward(spec, p64, batch.inputs.astype(np.float64))
        emb = net.embed(spec, p64, batch.inputs.astype(np.float64))
        return float(loss.evaluate(logits, emb, batch.labels)[0])

    for idx in rng.choice(params.size, size=20, replace=False):
        fd = central_diff(value_at, params, idx)
        assert rel_err(grads[idx], fd) < 1e-3


def test_embedding_loss_grads_and_zero_head(small_spec):
    rng = np.random.default_rng(3)
    params = net.init_params(small_spec, seed=3)
    batch = _rand_batch(small_spec, rng)
    loss = SquaredEmbeddingLoss()
    _, grads = net.loss_and_param_grads(small_spec, params, batch, loss)
    head_size = small_spec.hidden_dims[-1] * small_spec.num_classes + small_spec.num_classes
    assert (grads[-head_size:] == 0).all()

    def value_at(p64):
        return float(loss.evaluate(None, net.embed(small_spec, p64, batch.inputs.astype(np.float64)), None)[0])

    for idx in rng.choice(params.size - head_size, size=20, replace=False):
        fd = central_diff(value_at, params, idx)
        assert rel_err(grads[idx], fd) < 1e-3


def test_input_grads_zero_params(small_spec):
    params = np.zeros(net.param_count(small_spec), dtype=np.float32)
    batch = _rand_batch(small_spec, np.random.default_rng(1))
    gx = net.input_grads(small_spec, params, batch, net.CrossEntropyLoss())
    assert gx.shape == batch.inputs.shape
    assert (gx == 0).all()


def test_input_grads_match_finite_differences():
    rng = np.random.default_rng(4)
    spec = net.NetworkSpec(input_dim=5, hidden_dims=[7], num_classes=4)
    params = net.init_params(spec, seed=4)
    batch = _rand_batch(spec, rng)
    loss = net.TargetedCrossEntropy(target=2)
    gx = net.input_grads(spec, params, batch, loss)

    def value_at(x64):
        logits = net.forward(spec, params.astype(np.float64), x64.reshape(batch.inputs.shape))
        return float(loss.evaluate(logits, None, None)[0])

    flat = batch.inputs.ravel()
    for idx in rng.choice(flat.size, size=20, replace=False):
        fd = central_diff(value_at, flat, idx)
        assert rel_err(gx.flat[idx], fd) < 1e-3


def test_sgd_step():
    p = np.array([1.0, 2.0], dtype=np.float32)
    g = np.array([1.0, -1.0], dtype=np.float32)
    assert np.array_equal(net.sgd_step(p, np.zeros(2, np.float32), 0.1), p)
    assert np.array_equal(net.sgd_step(p, g, 0.0), p)
    assert np.allclose(net.sgd_step(p, g, 0.5), [0.5, 2.5])


def test_non_finite_loss_raises(small_spec):
    class BadLoss:
        def evaluate(self, logits, emb, labels):
            return float("nan"), None, emb

    params = net.init_params(small_spec, seed=0)
    batch = _rand_batch(small_spec, np.random.default_rng(0))
    with pytest.raises(NumericError):
        net.loss_and_param_grads(small_spec, params, batch, BadLoss())


def test_checkpoint_roundtrip(tmp_path, small_spec):
    params = net.init_params(small_spec, seed=11)
    path = tmp_path / "model.bin"
    net.save_params(path, params)
    loaded = net.load_params(path, expected_count=params.size)
    assert np.array_equal(loaded, params)


def test_checkpoint_bad_header(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"not-a-checkpoint v9 3\n" + b"\x00" * 12)
    with pytest.raises(DataFormatError):
        net.load_params(path)


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "trunc.bin"
    path.write_bytes(b"fedspa-params v1 4\n" + b"\x00" * 10)
    with pytest.raises(DataFormatError):
        net.load_params(path)
