import numpy as np
import pytest

from splitplot.contrasts import ContrastMatrix, apply_contrast, standard_contrasts


def test_two_by_two_rows():
    c = standard_contrasts(2, 2)
    assert c.labels == ("A", "B", "A:B")
    # treatment order (0,0), (0,1), (1,0), (1,1)
    np.testing.assert_allclose(c.g[0], [-0.5, -0.5, 0.5, 0.5])
    np.testing.assert_allclose(c.g[1], [-0.5, 0.5, -0.5, 0.5])
    np.testing.assert_allclose(c.g[2], [1.0, -1.0, -1.0, 1.0])


def test_halved_interactions():
    c = standard_contrasts(2, 2, halved_interactions=True)
    np.testing.assert_allclose(c.g[2], [0.5, -0.5, -0.5, 0.5])
    np.testing.assert_allclose(c.g[:2], standard_contrasts(2, 2).g[:2])


def test_three_by_two_labels_and_rows():
    c = standard_contrasts(3, 2)
    assert c.labels == ("A1", "A2", "B", "A1:B", "A2:B")
    # A1: mean over b of Ybar(1,b) - Ybar(0,b)
    np.testing.assert_allclose(c.g[0], [-0.5, -0.5, 0.5, 0.5, 0.0, 0.0])
    # B averages over the three a levels
    np.testing.assert_allclose(c.g[2], [-1 / 3, 1 / 3] * 3)
    np.testing.assert_allclose(c.g[3], [1, -1, -1, 1, 0, 0])
    np.testing.assert_allclose(c.g.sum(axis=1), 0.0, atol=1e-14)


def test_rows_must_sum_to_zero():
    with pytest.raises(ValueError):
        ContrastMatrix(g=np.array([[1.0, 0.0]]), labels=("bad",))
    with pytest.raises(ValueError):
        ContrastMatrix(g=np.array([[1.0, -1.0]]), labels=("a", "b"))


def test_row_selector():
    c = standard_contrasts(2, 2)
    r = c.row(1)
    assert r.labels == ("B",)
    np.testing.assert_array_equal(r.g, c.g[1:2])


def test_apply_contrast():
    c = standard_contrasts(2, 2)
    means = np.array([1.0, 2.0, 3.0, 5.0])
    cov = np.diag([1.0, 2.0, 3.0, 4.0])
    eff = apply_contrast(c, means, cov)
    np.testing.assert_allclose(eff.estimates, [2.5, 1.5, 1.0])
    np.testing.assert_allclose(eff.covariance, c.g @ cov @ c.g.T)
    assert eff.labels == c.labels
    with pytest.raises(ValueError):
        apply_contrast(c, means[:3], cov[:3, :3])


def test_apply_contrast_accepts_estimate_objects():
    class Est:
        means = np.array([0.0, 1.0, 2.0, 3.0])
        covariance = np.eye(4)

    eff = apply_contrast(standard_contrasts(2, 2), Est())
    np.testing.assert_allclose(eff.estimates, [2.0, 1.0, 0.0])
