"""The frozen tables agree with the oracles that produced them."""
import oracles


def test_adams_table_matches_bernoulli_oracle():
    assert [oracles.m_from_bernoulli(s) for s in range(1, 13)] == oracles.ADAMS_M


def test_bernoulli_and_brute_force_oracles_agree():
    for s in range(1, 25):
        assert oracles.m_from_bernoulli(s) == oracles.m_brute_force(s)


def test_su2_identification_is_an_isometry():
    assert abs(oracles.su2_linear_degree()) == 1


def test_det_poly_roots_on_known_polynomial():
    import numpy as np

    P = np.zeros((3, 1, 1))
    P[0, 0, 0], P[2, 0, 0] = 4.0, 1.0  # nu^2 + 4
    roots = sorted(oracles.det_poly_roots(P), key=lambda z: z.imag)
    assert np.allclose(roots, [-2j, 2j])
