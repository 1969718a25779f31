import numpy as np
import pytest
from hypothesis import given, strategies as st

from blockbilevel import BlockMatrix, BlockVector


class TestBlockVector:
    def test_heterogeneous_dims(self):
        v = BlockVector([np.ones(2), np.ones(5), np.ones(3)])
        assert v.dims() == [2, 5, 3]
        assert v.sq_norm() == pytest.approx(10.0)

    def test_arithmetic(self):
        a = BlockVector([np.array([1.0, 2.0]), np.array([3.0])])
        b = BlockVector([np.array([0.5, 0.5]), np.array([1.0])])
        s = a + b
        assert np.allclose(s[0], [1.5, 2.5]) and np.allclose(s[1], [4.0])
        d = a - b
        assert np.allclose(d[0], [0.5, 1.5])
        sc = 2.0 * a
        assert np.allclose(sc[1], [6.0])

    def test_shape_mismatch_rejected(self):
        a = BlockVector([np.zeros(2), np.zeros(3)])
        b = BlockVector([np.zeros(2), np.zeros(4)])
        with pytest.raises(ValueError, match="block 1"):
            _ = a + b
        with pytest.raises(ValueError, match="block counts"):
            _ = a + BlockVector([np.zeros(2)])
        with pytest.raises(ValueError):
            a[0] = np.zeros(5)

    def test_copy_is_deep(self):
        a = BlockVector([np.array([1.0, 2.0])])
        c = a.copy()
        c[0] = np.array([9.0, 9.0])
        assert np.allclose(a[0], [1.0, 2.0])

    def test_non_vector_rejected(self):
        with pytest.raises(ValueError, match="not a vector"):
            BlockVector([np.zeros((2, 2))])


class TestBlockMatrix:
    def test_symmetrized_on_construction(self):
        X = np.array([[1.0, 2.0], [0.0, 3.0]])
        bm = BlockMatrix([X])
        assert np.max(np.abs(bm[0] - bm[0].T)) == 0.0

    @given(st.integers(min_value=1, max_value=6),
           st.integers(min_value=0, max_value=10_000))
    def test_symmetry_exact_for_random_blocks(self, d, seed):
        rng = np.random.default_rng(seed)
        bm = BlockMatrix([rng.standard_normal((d, d))])
        assert np.max(np.abs(bm[0] - bm[0].T)) == 0.0

    def test_setitem_symmetrizes(self):
        bm = BlockMatrix([np.eye(2)])
        bm[0] = np.array([[0.0, 4.0], [0.0, 0.0]])
        assert np.allclose(bm[0], [[0.0, 2.0], [2.0, 0.0]])

    def test_non_square_rejected(self):
        with pytest.raises(ValueError, match="not square"):
            BlockMatrix([np.zeros((2, 3))])

    def test_identity_and_norm(self):
        bm = BlockMatrix.identity([2, 3], scale=2.0)
        assert bm.dims() == [2, 3]
        assert bm.sq_norm() == pytest.approx(4.0 * 5)
