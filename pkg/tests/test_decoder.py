import numpy as np
import pytest

from oracles import numeric_grad, rel_error
from tip import autodiff as ad
from tip.autodiff import Parameter, Tape, Tensor, backward
from tip.decoder import DistMultDecoder, NnDecoder, df_score, nn_score, score_batch


def df(rel):
    return DistMultDecoder(Tensor(np.asarray(rel, dtype=float)))


def nn(rng, d=3, hidden=4, R=2):
    return NnDecoder(Tensor(rng.normal(size=(2 * d, hidden))), Tensor(rng.normal(size=(hidden, R))))


def test_zero_embeddings_score_half():
    z = np.zeros((3, 4))
    assert df_score(z, 0, 1, 0, df(np.ones((2, 4)))) == 0.5
    np.testing.assert_array_equal(nn_score(z, 0, 2, nn(np.random.default_rng(0), d=4)), [0.5, 0.5])


def test_distmult_example():
    z = np.ones((2, 3))
    assert df_score(z, 0, 1, 0, df([[1.0, 1.0, 1.0]])) == pytest.approx(1 / (1 + np.exp(-3)), abs=1e-15)


def test_distmult_symmetric():
    rng = np.random.default_rng(1)
    z, dec = rng.normal(size=(6, 5)), df(rng.normal(size=(3, 5)))
    for i, j, r in [(0, 1, 0), (2, 5, 2), (3, 4, 1)]:
        assert df_score(z, i, j, r, dec) == df_score(z, j, i, r, dec)


def test_distmult_logit_scaling():
    rng = np.random.default_rng(2)
    z, m = rng.normal(size=(4, 3)), rng.normal(size=(2, 3))
    t = [[0, 1, 2], [3, 0, 1]]
    base = df(m).logits(Tensor(z), t).numpy()
    np.testing.assert_allclose(df(m).logits(Tensor(2 * z), t).numpy(), 4 * base, rtol=1e-12)
    np.testing.assert_allclose(df(3 * m).logits(Tensor(z), t).numpy(), 3 * base, rtol=1e-12)


def test_nn_symmetric_and_length():
    rng = np.random.default_rng(3)
    z, dec = rng.normal(size=(5, 3)), nn(rng, R=4)
    a, b = nn_score(z, 1, 3, dec), nn_score(z, 3, 1, dec)
    assert a.shape == (4,)
    assert np.array_equal(a, b)
    assert np.all((a > 0) & (a < 1))


@pytest.mark.parametrize("kind", ["df", "nn"])
def test_score_batch_matches_loop(kind):
    rng = np.random.default_rng(4)
    z = rng.normal(size=(8, 3))
    dec = df(rng.normal(size=(2, 3))) if kind == "df" else nn(rng)
    t = np.column_stack([rng.integers(0, 8, 40), rng.integers(0, 2, 40), rng.integers(0, 8, 40)])
    batch = score_batch(z, t, dec)
    if kind == "df":
        loop = [df_score(z, i, j, r, dec) for i, r, j in t]
    else:
        loop = [nn_score(z, i, j, dec)[r] for i, r, j in t]
    assert np.max(np.abs(batch - np.array(loop))) <= 1e-12


def test_empty_batch_and_bad_relation():
    z = np.ones((2, 2))
    assert score_batch(z, [], df(np.ones((1, 2)))).shape == (0,)
    with pytest.raises(IndexError):
        score_batch(z, [[0, 3, 1]], df(np.ones((1, 2))))


@pytest.mark.parametrize("kind", ["df", "nn"])
def test_decoder_gradients(kind):
    rng = np.random.default_rng(5)
    z = Parameter("z", rng.normal(size=(5, 3)))
    if kind == "df":
        params = [z, Parameter("rel", rng.normal(size=(2, 3)))]
    else:
        params = [z, Parameter("w1", rng.normal(size=(6, 4))), Parameter("w2", rng.normal(size=(4, 2)))]
    t = [[0, 0, 1], [2, 1, 4], [3, 1, 3], [4, 0, 2]]

    def loss(tape=None):
        ts = [tape.watch(p) if tape is not None else Tensor(p.value) for p in params]
        dec = DistMultDecoder(ts[1]) if kind == "df" else NnDecoder(ts[1], ts[2])
        return ad.sum(ad.log(dec.score(ts[0], t)))

    tape = Tape()
    backward(tape, loss(tape))
    numeric = numeric_grad(lambda: loss().item(), [p.value for p in params])
    for p, n in zip(params, numeric):
        assert rel_error(p.grad, n) < 1e-6, p.name
