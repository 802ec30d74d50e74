import numpy as np
import pytest

from idapbc import maglev
from idapbc.errors import ContractError

P = maglev.MaglevParams()
G = maglev.MaglevGains()


def test_nominal_parameters():
    assert (P.gamma, P.k, P.c, P.mass, P.a, P.y2_star) == (2.52, 6.4042e-5, 0.005, 0.0844, 9.81, 0.002)
    assert (G.alpha11, G.alpha13, G.v12, G.v13, G.p1, G.p2) == (-2, -2, -2, 2, 400, 20)


def test_equilibrium_flux():
    assert abs(P.y1_star - np.sqrt(2 * 6.4042e-5 * 0.0844 * 9.81)) < 1e-18
    assert abs(P.y1_star - 0.0102980) < 1e-7


def test_interconnection_matrix():
    Fd = G.F_d
    np.testing.assert_array_equal(Fd, [[-2, 0, -2], [0, -2, 2], [2, -2, 0]])
    assert abs(np.linalg.det(Fd) + 16.0) < 1e-12
    np.testing.assert_array_equal(Fd + Fd.T, np.diag([-4.0, -4.0, 0.0]))


def test_annihilator_exact():
    d = maglev.build()
    x = np.array([1e-3, -1e-3, 2e-3])
    assert np.all(d.target.G_perp(x) @ d.system.G(x) == 0.0)


def test_equilibrium_is_fixed_point_of_drift_in_unactuated_directions():
    d = maglev.build()
    f0 = d.system.f(np.zeros(3))
    assert f0[1] == 0.0 and f0[2] == 0.0


@pytest.mark.parametrize("name,value", [("alpha13", 2.0), ("v13", -1.0), ("p1", 0.0), ("p2", -3.0)])
def test_gain_sign_constraints(name, value):
    with pytest.raises(ContractError, match=name):
        maglev.MaglevGains(**{name: value})


def test_param_constraints():
    with pytest.raises(ContractError):
        maglev.MaglevParams(y2_star=0.006)
    with pytest.raises(ContractError):
        maglev.MaglevParams(k=-1.0)


def test_grad_z1_values():
    assert maglev.closed_form_grad_z1(np.zeros(3), P, G) == 0.0
    assert abs(maglev.closed_form_grad_z1(np.array([1.0, 0, 0]), P, G) - (400 + 20 / 3)) < 1e-10
    assert abs(maglev.closed_form_grad_z1(np.array([0, 1.0, 0]), P, G) - (-2 / 0.0844)) < 1e-12


def test_feedforward_at_equilibrium():
    u0 = maglev.closed_form_control(np.zeros(3), P, G)
    assert abs(u0 - 2.52 / 6.4042e-5 * 0.003 * P.y1_star) < 1e-12
    assert abs(u0 - 1.2157) < 1e-4


def test_contact_kills_feedforward():
    x = np.array([1e-3, P.c - P.y2_star, 2e-3])
    z = np.linalg.inv(G.F_d).T @ x
    assert maglev.closed_form_control(x, P, G) == pytest.approx(maglev.closed_form_grad_z1(z, P, G), abs=1e-12)


def test_rho_closed_form_at_origin_and_on_z2_axis():
    np.testing.assert_array_equal(maglev.closed_form_rho(np.zeros(3), P, G), [0.0, 0.0])
    r = maglev.closed_form_rho(np.array([0.0, 1e-3, 0.0]), P, G)
    assert r[0] == pytest.approx(2 / 0.0844 * 1e-3, rel=1e-14)
    assert r[1] == 0.0


def test_coordinates_are_inverse_transpose():
    d = maglev.build()
    x = np.array([2e-3, -1e-3, 5e-3])
    z = d.coords.tau(x)
    np.testing.assert_allclose(z, np.linalg.solve(G.F_d.T, x), atol=1e-17)
    np.testing.assert_allclose(d.coords.inverse(z), x, atol=1e-17)
    np.testing.assert_allclose(maglev.error_coordinates(z, G), x, atol=1e-17)
