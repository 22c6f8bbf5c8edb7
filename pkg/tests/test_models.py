import numpy as np
import pytest

from weakkam import (DomainEscapeError, HorizonError, SuspensionFlow,
                     VectorFieldSpec, birkhoff_integral, lie_derivative,
                     periodic_orbits)

# Distinct minimal orbits per base period for the default base matrix:
# fixed-point counts of A^n are 1, 5, 16, 45, 121, 320.
ORBITS_PER_PERIOD = {1: 1, 2: 2, 3: 5, 4: 10, 5: 24, 6: 50}


def test_flow_roundtrip(model):
    rng = np.random.default_rng(0)
    p = rng.random((50, 3))
    for t in (0.3, 1.7, -2.9, 12.5):
        q = model.flow_map(p, t)
        back = model.flow_map(q, -t)
        # rounding accumulates with the number of roof crossings
        assert np.abs(back - p).max() < 1e-12 * max(1.0, 40.0 * abs(t))


def test_flow_group_property(model):
    rng = np.random.default_rng(1)
    p = rng.random((20, 3))
    a = model.flow_map(model.flow_map(p, 0.7), 1.9)
    b = model.flow_map(p, 2.6)
    assert np.abs(a - b).max() < 1e-12


def test_flow_applies_base_map_at_roof(model):
    p = np.array([0.2, 0.7, 0.9])
    q = model.flow_map(p, 0.2)
    A = model.base_matrix.astype(float)
    expect = np.mod(A @ p[:2], 1.0)
    assert np.allclose(q[:2], expect)
    assert abs(q[2] - 0.1) < 1e-12


def test_velocity_is_unit_roof_direction(model):
    v = model.velocity(np.random.default_rng(2).random((5, 3)))
    assert np.allclose(v[:, :2], 0.0) and np.allclose(v[:, 2], 1.0)
    assert model.sup_norm_bound == 1.0


def test_horizon_guard(model):
    with pytest.raises(HorizonError):
        model.flow_map(np.zeros(3), model.max_horizon + 1.0)


def test_difference_identity_and_local_antisymmetry(model):
    rng = np.random.default_rng(3)
    p = rng.random((40, 3))
    assert np.abs(model.difference(p, p)).max() == 0.0
    # Antisymmetry where the identity branch wins (no carry across the roof):
    # perturbations small against the distance to the gluing surface.
    p[:, 2] = 0.3 + 0.4 * p[:, 2]
    q = p + rng.uniform(-0.05, 0.05, size=p.shape)
    d1 = model.difference(q, p)
    d2 = model.difference(p, q)
    assert np.abs(d1 + d2).max() < 1e-12
    assert np.abs(model.distance(q, p) - model.distance(p, q)).max() < 1e-12


def test_difference_across_gluing(model):
    # Points just below the roof and just above 0 are close through the glue.
    p = np.array([0.2, 0.7, 0.999])
    q = model.flow_map(p, 0.002)
    assert model.distance(q, p) < 0.003


def test_distance_triangle_sampled(model):
    rng = np.random.default_rng(4)
    p, q, r = (rng.random((30, 3)) for _ in range(3))
    assert np.all(model.distance(p, r)
                  <= model.distance(p, q) + model.distance(q, r) + 1e-12)


def test_diameter_bounds(model):
    d = model.diameter()
    assert 0.5 < d <= np.sqrt(0.5 + 0.25) + 1e-12


def test_eigen_data(model):
    lam = (3.0 + np.sqrt(5.0)) / 2.0
    assert abs(model.unstable_eigenvalue - lam) < 1e-12
    assert abs(model.stable_eigenvalue - 1.0 / lam) < 1e-12
    assert abs(model.hyperbolicity.lambda_u - np.log(lam)) < 1e-12
    A = model.base_matrix.astype(float)
    eu = model.unstable_direction
    assert np.abs(A @ eu - lam * eu).max() < 1e-10


def test_hyperbolic_validation():
    with pytest.raises(ValueError):
        SuspensionFlow(base_matrix=np.array([[1, 1], [0, 1]]))  # parabolic
    with pytest.raises(ValueError):
        SuspensionFlow(base_matrix=np.array([[2, 0], [0, 2]]))  # det 4
    with pytest.raises(ValueError):
        SuspensionFlow(roof=0.0)


def test_periodic_orbit_counts(model):
    orbits = periodic_orbits(model, 6)
    per_period = {}
    for _, period in orbits:
        n = int(round(period / model.roof))
        per_period[n] = per_period.get(n, 0) + 1
    assert per_period == ORBITS_PER_PERIOD


def test_periodic_orbits_are_periodic(model):
    for base, period in periodic_orbits(model, 4):
        p = np.array([base[0], base[1], 0.0])
        q = model.flow_map(p, period)
        assert model.distance(q, p) < 1e-9


def test_periodic_orbits_cap(model):
    with pytest.raises(ValueError):
        periodic_orbits(model, 13)


def test_birkhoff_constant(model):
    from weakkam import constant_observable
    phi = constant_observable(2.5)
    val = birkhoff_integral(model, phi, np.array([0.1, 0.2, 0.3]), 1.7, 0.01)
    assert abs(val - 2.5 * 1.7) < 1e-12


def test_birkhoff_coboundary_telescopes(model, cobound):
    phi, pot = cobound
    rng = np.random.default_rng(5)
    starts = rng.random((10, 3))
    t = 3.0
    integ = birkhoff_integral(model, phi, starts, t, 0.002)
    ends = model.flow_map(starts, t)
    expect = pot(ends) - pot(starts)
    assert np.abs(integ - expect).max() < 1e-4


def test_lie_derivative_matches_analytic(model, cobound):
    phi, pot = cobound
    rng = np.random.default_rng(6)
    pts = rng.random((200, 3))
    pts[:, 2] = pts[:, 2] * 0.8 + 0.1  # stay away from the glue kink scale
    num = lie_derivative(model, pot, pts, 1e-4)
    assert np.abs(num - phi(pts)).max() < 1e-5


def test_lie_derivative_grid_spacing_guard(model, small_grid):
    from weakkam import GridFunction
    u = GridFunction.zeros(small_grid)
    with pytest.raises(ValueError):
        lie_derivative(model, u, np.zeros(3), small_grid.max_spacing)


def test_vector_field_rk4_circle():
    # d/dt (x, y) = (-y, x): exact rotation; no domain wrap involved.
    field = VectorFieldSpec(
        dimension=1,
        evaluate=lambda p: np.stack([-p[..., 1], p[..., 0]], axis=-1),
        sup_norm_bound=1.0, lipschitz_bound=1.0,
        domain_box=np.array([[-2.0, 2.0], [-2.0, 2.0]]),
        periodic=(False, False), h_int=1e-3)
    p = np.array([1.0, 0.0])
    q = field.flow_map(p, np.pi / 2)
    assert np.abs(q - np.array([0.0, 1.0])).max() < 1e-9


def test_vector_field_domain_escape():
    field = VectorFieldSpec(
        dimension=1, evaluate=lambda p: np.ones_like(p),
        sup_norm_bound=2.0, lipschitz_bound=0.0,
        domain_box=np.array([[0.0, 1.0], [0.0, 1.0]]),
        periodic=(False, False))
    with pytest.raises(DomainEscapeError) as ei:
        field.flow_map(np.array([0.9, 0.9]), 1.0)
    assert ei.value.exit_time is not None
