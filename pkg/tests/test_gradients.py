import numpy as np
import pytest

from roadcast import engine as E

from gradcheck_cases import CASES, TOLERANCE, check


@pytest.mark.parametrize("name", sorted(CASES))
def test_finite_differences(name):
    worst, skipped = check(name)
    assert worst < TOLERANCE
    if name != "toy_drcp":
        assert skipped == 0


def test_toy_graph_skips_few_coordinates():
    from gradcheck_cases import TOY_DRCP
    from roadcast.models import Drcp
    _, skipped = check("toy_drcp", seed=1)
    assert skipped < 0.25 * Drcp(TOY_DRCP).n_parameters()


def test_linear_map_gradient():
    x = np.array([[1.0, 2.0, 3.0]])
    w = E.Parameter(np.ones((3, 1)))
    E.backward(E.sum_all(E.dense(E.Tensor(x), w, E.Tensor(np.zeros(1)))))
    assert np.allclose(w.grad, x.T)


def test_constant_has_zero_gradient():
    w = E.Parameter(np.ones(3))
    loss = E.sum_all(E.Tensor(np.ones(3), requires_grad=True))
    E.backward(loss)
    assert w.grad is None


def test_backward_needs_scalar_root():
    x = E.Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        E.backward(E.relu(x))


def test_gradients_accumulate_across_uses():
    x = E.Parameter(np.array([[1.0, -2.0]]))
    E.backward(E.sum_all(E.concat(x, x)))
    assert np.array_equal(x.grad, [[2.0, 2.0]])


def test_no_grad_records_nothing():
    x = E.Parameter(np.ones((2, 2)))
    with E.no_grad():
        y = E.relu(x)
    assert not y.requires_grad
