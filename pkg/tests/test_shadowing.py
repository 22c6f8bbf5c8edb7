import numpy as np
import pytest

from weakkam import (ConstantsTooWeakError, DiscretePseudoOrbit, EscapeError,
                     affine_poincare, estimate_k_gamma, k_gamma_from_maps,
                     lattice_box_chains, pseudo_orbit_suite, shadow_periodic)


def test_estimate_k_gamma(atlas):
    h = atlas.hyper
    k = estimate_k_gamma(h.sigma_u, h.sigma_s, h.eta)
    assert k >= 1.0
    with pytest.raises(ConstantsTooWeakError):
        estimate_k_gamma(1.01, 0.99, 0.1)


def test_lattice_chains_partition_level0(atlas):
    chains = lattice_box_chains(atlas)
    n_level0 = sum(1 for b in atlas.boxes if abs(b.center[2]) < 1e-12)
    covered = [i for cyc, _ in chains for i in cyc]
    assert len(covered) == len(set(covered)) == n_level0
    lengths = sorted(period for _, period in chains)
    assert lengths[0] == 1  # the fixed lattice point at the origin
    assert sum(lengths) == n_level0


def test_chain_maps_have_zero_offset(atlas):
    chains = lattice_box_chains(atlas)
    cyc = max(chains, key=lambda c: c[1])[0]
    for i in range(len(cyc)):
        m = affine_poincare(atlas, cyc[i], cyc[(i + 1) % len(cyc)])
        assert np.abs(m.offset).max() < 1e-12


def _chain_maps(atlas, min_len=3):
    chains = lattice_box_chains(atlas)
    cyc = next(c for c, period in chains if period >= min_len)
    return cyc, [affine_poincare(atlas, cyc[i], cyc[(i + 1) % len(cyc)])
                 for i in range(len(cyc))]


def test_exact_orbit_shadows_itself(atlas):
    cyc, maps = _chain_maps(atlas)
    orbit = DiscretePseudoOrbit(points=np.zeros((len(cyc), 2)),
                                box_indices=cyc, rho=atlas.rho)
    res = shadow_periodic(orbit, maps)
    assert res.passed
    assert np.abs(res.orbit).max() < 1e-12
    assert res.error_sum < 1e-14 and res.distance_sum < 1e-12


def test_noisy_orbit_is_shadowed(atlas):
    cyc, maps = _chain_maps(atlas)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1e-3, 1e-3, (len(cyc), 2))
    orbit = DiscretePseudoOrbit(points=pts, box_indices=cyc, rho=atlas.rho)
    res = shadow_periodic(orbit, maps)
    assert res.passed
    assert res.distance_sum <= res.k_gamma * res.error_sum + 1e-14
    assert res.residuals.max() < 1e-10
    assert abs(res.k_gamma - k_gamma_from_maps(maps)) < 1e-12


def test_pseudo_orbit_validation(atlas):
    cyc, maps = _chain_maps(atlas)
    with pytest.raises(ValueError):
        DiscretePseudoOrbit(points=np.zeros((4, 3)), box_indices=cyc,
                            rho=atlas.rho)
    far = np.full((len(cyc), 2), atlas.rho)  # outside B(rho/2)
    orbit = DiscretePseudoOrbit(points=far, box_indices=cyc, rho=atlas.rho)
    with pytest.raises(ValueError):
        orbit.validate(maps)


def test_suite_all_pass(atlas):
    results = pseudo_orbit_suite(atlas, 25, seed=3)
    assert len(results) == 25
    assert all(r["passed"] for r in results)
    assert max(r["max_residual"] for r in results) < 1e-10
    assert {r["length"] for r in results} != {1}  # several chain lengths used
