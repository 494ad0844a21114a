"""测试可微运算的前向值与反向规则"""

import numpy as np
import pytest

from rumor_adapt.autodiff import NumericError, ShapeError, Tensor, ops
from rumor_adapt.autodiff.gradcheck import check_gradients


def _weighted(out: Tensor, weights: np.ndarray) -> Tensor:
    """sum(out ⊙ weights)，让每个输出元素都有不同的上游梯度"""
    return ops.sum_all(ops.mul(out, Tensor(weights)))


def _leaf(rng, *shape, low=None, high=None) -> Tensor:
    data = rng.uniform(low, high, size=shape) if low is not None else rng.normal(size=shape)
    return Tensor(data, requires_grad=True)


class TestElementwise:
    """测试逐元素运算"""

    def test_broadcast_add_rejects_new_shape(self):
        """测试广播不能产生新形状"""
        with pytest.raises(ShapeError):
            ops.add(Tensor(np.ones((2, 1))), Tensor(np.ones((1, 3))))

    def test_row_vector_broadcast_gradient(self, rng):
        """测试行向量广播的梯度按行求和"""
        x = _leaf(rng, 3, 4)
        b = _leaf(rng, 4)
        ops.sum_all(ops.add(x, b)).backward()
        np.testing.assert_allclose(b.grad, np.full(4, 3.0))
        np.testing.assert_allclose(x.grad, np.ones((3, 4)))

    def test_relu_forward(self):
        """测试 ReLU 前向值"""
        out = ops.relu(Tensor([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])

    def test_log_without_floor_rejects_non_positive(self):
        """测试没有下限时对非正数取对数报错"""
        with pytest.raises(NumericError):
            ops.log(Tensor([1.0, 0.0]))

    def test_log_floor_blocks_gradient(self):
        """测试截断区域的梯度为 0"""
        x = Tensor([1e-20, 0.5], requires_grad=True)
        out = ops.log(x, floor=1e-12)
        assert out.data[0] == pytest.approx(np.log(1e-12))
        ops.sum_all(out).backward()
        np.testing.assert_allclose(x.grad, [0.0, 2.0])

    @pytest.mark.parametrize(
        "op",
        [
            lambda a, b: ops.add(a, b),
            lambda a, b: ops.sub(a, b),
            lambda a, b: ops.mul(a, b),
        ],
        ids=["add", "sub", "mul"],
    )
    def test_binary_gradients(self, rng, op):
        """测试二元运算的梯度"""
        a, b = _leaf(rng, 3, 4), _leaf(rng, 3, 4)
        w = rng.normal(size=(3, 4))
        report = check_gradients(lambda: _weighted(op(a, b), w), {"a": a, "b": b})
        assert report.passed, report.errors

    @pytest.mark.parametrize(
        "op,low,high",
        [
            (ops.exp, -1.0, 1.0),
            (lambda x: ops.log(x), 0.5, 2.0),
            (lambda x: ops.scale(x, -1.7), -1.0, 1.0),
            (ops.relu, 0.2, 1.0),
        ],
        ids=["exp", "log", "scale", "relu"],
    )
    def test_unary_gradients(self, rng, op, low, high):
        """测试一元运算的梯度"""
        x = _leaf(rng, 3, 4, low=low, high=high)
        w = rng.normal(size=(3, 4))
        report = check_gradients(lambda: _weighted(op(x), w), {"x": x})
        assert report.passed, report.errors

    def test_relu_negative_side_has_zero_gradient(self):
        """测试 ReLU 负半轴梯度为 0"""
        x = Tensor([-0.5, 0.5], requires_grad=True)
        ops.sum_all(ops.relu(x)).backward()
        np.testing.assert_array_equal(x.grad, [0.0, 1.0])


class TestShapeOps:
    """测试形状运算"""

    def test_reshape_rejects_bad_shape(self):
        """测试无法重排时报 ShapeError"""
        with pytest.raises(ShapeError):
            ops.reshape(Tensor(np.ones(6)), (4, 2))

    def test_concat_cols_requires_same_rows(self):
        """测试拼接要求行数相同"""
        with pytest.raises(ShapeError):
            ops.concat_cols([Tensor(np.ones((2, 1))), Tensor(np.ones((3, 1)))])

    def test_stack_rows_requires_vectors(self):
        """测试堆叠要求等长向量"""
        with pytest.raises(ShapeError):
            ops.stack_rows([Tensor(np.ones(2)), Tensor(np.ones(3))])
        with pytest.raises(ShapeError):
            ops.stack_rows([])

    def test_take_rows_repeated_indices(self):
        """测试重复下标的梯度累加"""
        x = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
        out = ops.take_rows(x, [2, 0, 2])
        np.testing.assert_array_equal(out.data, [[4.0, 5.0], [0.0, 1.0], [4.0, 5.0]])
        ops.sum_all(out).backward()
        np.testing.assert_array_equal(x.grad, [[1.0, 1.0], [0.0, 0.0], [2.0, 2.0]])

    def test_shape_op_gradients(self, rng):
        """测试转置、重排、拼接、堆叠、取行的梯度"""
        a, b = _leaf(rng, 3, 2), _leaf(rng, 3, 4)
        u, v = _leaf(rng, 5), _leaf(rng, 5)

        def loss():
            joined = ops.concat_cols([a, b])
            flipped = ops.reshape(ops.transpose(joined), (3, 6))
            stacked = ops.stack_rows([u, v, u])
            picked = ops.take_rows(flipped, [2, 0])
            return ops.add(
                _weighted(picked, np.linspace(-1.0, 1.0, 12).reshape(2, 6)),
                _weighted(stacked, np.arange(15.0).reshape(3, 5)),
            )

        report = check_gradients(loss, {"a": a, "b": b, "u": u, "v": v})
        assert report.passed, report.errors


class TestReductions:
    """测试归约运算"""

    def test_mean_rows(self, rng):
        """测试按行平均的前向值与梯度"""
        x = _leaf(rng, 4, 3)
        np.testing.assert_allclose(ops.mean_rows(x).data, x.data.mean(axis=0))
        report = check_gradients(lambda: _weighted(ops.mean_rows(x), np.array([1.0, -2.0, 0.5])), {"x": x})
        assert report.passed, report.errors

    def test_max_pool_tie_goes_to_lowest_row(self):
        """测试并列最大值时梯度流向行号最小的行"""
        x = Tensor([[1.0, 3.0], [1.0, 2.0], [0.0, 3.0]], requires_grad=True)
        out = ops.max_pool_rows(x)
        np.testing.assert_array_equal(out.data, [1.0, 3.0])
        ops.sum_all(out).backward()
        np.testing.assert_array_equal(x.grad, [[1.0, 1.0], [0.0, 0.0], [0.0, 0.0]])

    def test_max_pool_rejects_empty(self):
        """测试空矩阵不能池化"""
        with pytest.raises(ShapeError):
            ops.max_pool_rows(Tensor(np.zeros((0, 3))))

    def test_max_pool_gradient(self, rng):
        """测试最大池化的梯度"""
        x = _leaf(rng, 4, 5)
        report = check_gradients(lambda: _weighted(ops.max_pool_rows(x), np.arange(1.0, 6.0)), {"x": x})
        assert report.passed, report.errors


class TestMatrixOps:
    """测试矩阵运算"""

    def test_matmul_gradient_tight(self, rng):
        """测试 sum(A·B) 对 A 的梯度与差分的相对误差小于 1e-6"""
        a, b = _leaf(rng, 3, 4), _leaf(rng, 4, 2)
        report = check_gradients(lambda: ops.sum_all(ops.matmul(a, b)), {"a": a, "b": b}, threshold=1e-6)
        assert report.passed, report.errors

    def test_matmul_shape_error(self):
        """测试维度不匹配时报 ShapeError"""
        with pytest.raises(ShapeError):
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_softmax_rows_sum_to_one(self, rng):
        """测试 softmax 每行和为 1，大数值也稳定"""
        x = Tensor(rng.normal(size=(4, 5)) * 300.0)
        out = ops.softmax_rows(x)
        np.testing.assert_allclose(out.data.sum(axis=1), np.ones(4), atol=1e-12)
        assert np.all(np.isfinite(out.data))

    def test_softmax_rejects_non_finite(self):
        """测试非有限输入报 NumericError"""
        with pytest.raises(NumericError):
            ops.softmax_rows(Tensor([[1.0, np.inf]]))
        with pytest.raises(NumericError):
            ops.log_softmax_rows(Tensor([[np.nan, 0.0]]))

    def test_log_softmax_matches_log_of_softmax(self, rng):
        """测试 log_softmax 与 log(softmax) 一致"""
        x = Tensor(rng.normal(size=(3, 4)))
        np.testing.assert_allclose(
            ops.log_softmax_rows(x).data, np.log(ops.softmax_rows(x).data), atol=1e-12
        )

    def test_log_softmax_mask(self):
        """测试掩码外输出为 0，掩码内在子集上归一化"""
        x = Tensor([[1.0, 2.0, 3.0]])
        mask = np.array([[True, False, True]])
        out = ops.log_softmax_rows(x, mask=mask)
        assert out.data[0, 1] == 0.0
        expected = np.log(np.exp([1.0, 3.0]) / np.exp([1.0, 3.0]).sum())
        np.testing.assert_allclose(out.data[0, [0, 2]], expected, atol=1e-12)

    def test_log_softmax_mask_shape_checked(self):
        """测试掩码形状必须与输入一致"""
        with pytest.raises(ShapeError):
            ops.log_softmax_rows(Tensor(np.zeros((2, 2))), mask=np.ones((2, 3), dtype=bool))

    def test_softmax_and_log_softmax_gradients(self, rng):
        """测试 softmax、带掩码 log_softmax 的梯度"""
        x = _leaf(rng, 3, 4)
        mask = ~np.eye(3, 4, dtype=bool)
        w = rng.normal(size=(3, 4))
        report = check_gradients(
            lambda: ops.add(
                _weighted(ops.softmax_rows(x), w),
                _weighted(ops.log_softmax_rows(x, mask=mask), w),
            ),
            {"x": x},
        )
        assert report.passed, report.errors


class TestCosine:
    """测试余弦相似度"""

    def test_cosine_matrix_values(self, rng):
        """测试余弦相似度矩阵与直接计算一致"""
        a, b = rng.normal(size=(3, 5)), rng.normal(size=(2, 5))
        expected = (a @ b.T) / np.outer(np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1))
        np.testing.assert_allclose(ops.cosine_matrix(Tensor(a), Tensor(b)).data, expected, atol=1e-10)

    def test_cosine_similarity_scalar(self):
        """测试两个向量的余弦相似度"""
        sim = ops.cosine_similarity(Tensor([1.0, 0.0]), Tensor([1.0, 1.0]))
        assert sim.shape == ()
        assert sim.item() == pytest.approx(1.0 / np.sqrt(2.0))

    def test_zero_vector_is_finite(self):
        """测试零向量的余弦相似度为 0 且梯度有限"""
        x = Tensor(np.zeros((1, 3)), requires_grad=True)
        sim = ops.cosine_matrix(x, Tensor([[1.0, 2.0, 3.0]]))
        assert sim.data[0, 0] == 0.0
        ops.sum_all(sim).backward()
        assert np.all(np.isfinite(x.grad))

    def test_cosine_gradient(self, rng):
        """测试余弦相似度矩阵的梯度"""
        a, b = _leaf(rng, 3, 4), _leaf(rng, 2, 4)
        w = rng.normal(size=(3, 2))
        report = check_gradients(lambda: _weighted(ops.cosine_matrix(a, b), w), {"a": a, "b": b})
        assert report.passed, report.errors

    def test_shape_mismatch(self):
        """测试维度不一致时报 ShapeError"""
        with pytest.raises(ShapeError):
            ops.cosine_matrix(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))))
