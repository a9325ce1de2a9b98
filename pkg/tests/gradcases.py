"""Primitive gradient-check cases shared by the unit and acceptance suites."""

import numpy as np

from shapemate.autodiff import Tensor
from shapemate.autodiff import tensor as T
from shapemate.autodiff.gradcheck import relative_error

from oracles import finite_difference

H = 1e-6


def away_from_zero(rng, shape, gap=0.1):
    u = rng.normal(size=shape)
    return np.sign(u) * (gap + np.abs(u))


def distinct(rng, shape):
    """Values with well-separated entries so max/argmax are stable under FD steps."""
    n = int(np.prod(shape))
    return (rng.permutation(n) * 0.1 + rng.random(n) * 0.01).reshape(shape) - n * 0.05


# name -> (input builders, forward on tensors)
def cases(rng):
    bn_rm, bn_rv = np.zeros(5), np.ones(5)
    idx = rng.integers(0, 6, size=(2, 6, 3))
    return {
        "matmul": ([rng.normal(size=(3, 4)), rng.normal(size=(4, 2))], lambda a, b: T.matmul(a, b)),
        "matmul_batched": ([rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5))], lambda a, b: T.matmul(a, b)),
        "add_broadcast": ([rng.normal(size=(3, 4)), rng.normal(size=(4,))], lambda a, b: T.add(a, b)),
        "sub": ([rng.normal(size=(3, 4)), rng.normal(size=(3, 1))], lambda a, b: T.sub(a, b)),
        "mul": ([rng.normal(size=(3, 4)), rng.normal(size=(1, 4))], lambda a, b: T.mul(a, b)),
        "concat": ([rng.normal(size=(2, 3)), rng.normal(size=(2, 4))], lambda a, b: T.concat([a, b], axis=-1)),
        "row_softmax": ([rng.normal(size=(3, 5))], lambda a: T.row_softmax(a)),
        "relu": ([away_from_zero(rng, (4, 5))], lambda a: T.relu(a)),
        "leaky_relu": ([away_from_zero(rng, (4, 5))], lambda a: T.leaky_relu(a, 0.2)),
        "sigmoid": ([rng.normal(size=(4, 3))], lambda a: T.sigmoid(a)),
        "abs": ([away_from_zero(rng, (4, 3))], lambda a: T.tabs(a)),
        "layer_norm": ([rng.normal(size=(3, 6)), rng.normal(size=6), rng.normal(size=6)],
                       lambda x, g, b: T.layer_norm(x, g, b)),
        "batch_norm_train": ([rng.normal(size=(4, 3, 5)), rng.normal(size=5), rng.normal(size=5)],
                             lambda x, g, b: T.batch_norm(x, g, b, bn_rm.copy(), bn_rv.copy(), True)),
        "batch_norm_eval": ([rng.normal(size=(4, 5)), rng.normal(size=5), rng.normal(size=5)],
                            lambda x, g, b: T.batch_norm(x, g, b, bn_rm + 0.3, bn_rv * 2, False)),
        "max_pool": ([distinct(rng, (2, 4, 3))], lambda a: T.max_pool(a, axis=1)),
        "gather": ([rng.normal(size=(2, 6, 4))], lambda a: T.gather(a, idx)),
        "l2_normalize": ([rng.normal(size=(4, 3))], lambda a: T.l2_normalize(a, axis=-1)),
        "sum_axis": ([rng.normal(size=(3, 4))], lambda a: T.tsum(a, axis=0)),
        "mean": ([rng.normal(size=(3, 4))], lambda a: T.mean(a)),
        "norm_l1": ([away_from_zero(rng, (3, 4))], lambda a: T.norm(a, "l1", axis=-1)),
        "norm_l2": ([rng.normal(size=(3, 4))], lambda a: T.norm(a, "l2", axis=-1)),
        "norm_fro": ([rng.normal(size=(2, 3, 3))], lambda a: T.norm(a, "fro", axis=(-2, -1))),
        "reshape_transpose": ([rng.normal(size=(2, 3, 4))], lambda a: T.swapaxes(T.reshape(a, (3, 2, 4)), 0, 2)),
        "index_select": ([rng.normal(size=(5, 3))], lambda a: a[np.array([0, 2, 2, 4])]),
    }


CASE_NAMES = list(cases(np.random.default_rng(0)))



def primitive_error(name: str) -> float:
    """Max relative error of backprop vs central differences for one primitive."""
    rng = np.random.default_rng(CASE_NAMES.index(name))
    inputs, fwd = cases(rng)[name]
    out_shape = fwd(*[Tensor(x) for x in inputs]).shape
    weights = rng.normal(size=out_shape)

    def loss_of(arrays):
        return T.tsum(T.mul(fwd(*arrays), weights))

    params = [Tensor(x.copy(), requires_grad=True) for x in inputs]
    loss_of(params).backward()
    worst = 0.0
    for i, p in enumerate(params):
        def f(xi, i=i):
            arrays = [Tensor(xi if j == i else inputs[j]) for j in range(len(inputs))]
            return loss_of(arrays).item()
        numeric = finite_difference(f, inputs[i], H)
        worst = max(worst, float(relative_error(p.grad, numeric, 1e-7).max()))
    return worst
