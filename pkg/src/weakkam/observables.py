"""Built-in observable families on the suspension manifold.

All families come with analytic derivative data where the test oracles need
it: the coboundary family is the exact flow-derivative of a closed-form
potential, so its orbit averages vanish identically.
"""

from __future__ import annotations

import numpy as np

from .models import Observable, SuspensionFlow


def smoothstep(x):
    """Quintic smoothstep: 0 on x<=0, 1 on x>=1, C^2 across the ends."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (10.0 + x * (-15.0 + 6.0 * x))


def smoothstep_prime(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    y = np.where(inside, x, 0.5)
    d = 30.0 * y * y * (1.0 - y) * (1.0 - y)
    return np.where(inside, d, 0.0)


def constant_observable(c):
    return Observable(
        evaluate=lambda p: np.full(np.asarray(p)[..., 0].shape, float(c)),
        lipschitz_constant=0.0,
        sup_bound=abs(float(c)),
        name=f"constant[{c}]",
    )


class GluePotential:
    """A potential u0 on the suspension built from a base trig polynomial P.

    u0(b, s) = (1 - g(s/roof)) P(b) + g(s/roof) P(A b) with g a quintic
    smoothstep, so u0 is continuous and C^2 across the roof gluing and its
    flow derivative g'(s/roof)/roof * (P(Ab) - P(b)) is closed-form.
    """

    def __init__(self, model: SuspensionFlow, coeffs=None):
        self.model = model
        # coeffs: list of (k1, k2, amp_cos, amp_sin) frequency terms of P.
        if coeffs is None:
            coeffs = [(1, 0, 0.05, 0.02), (0, 1, -0.03, 0.04), (1, 1, 0.02, -0.01)]
        self.coeffs = [(int(k1), int(k2), float(ac), float(as_))
                       for (k1, k2, ac, as_) in coeffs]

    def base_potential(self, b):
        b = np.asarray(b, dtype=float)
        out = np.zeros(b[..., 0].shape)
        for k1, k2, ac, as_ in self.coeffs:
            ang = 2.0 * np.pi * (k1 * b[..., 0] + k2 * b[..., 1])
            out = out + ac * np.cos(ang) + as_ * np.sin(ang)
        return out

    def base_gradient(self, b):
        b = np.asarray(b, dtype=float)
        g = np.zeros(b.shape)
        for k1, k2, ac, as_ in self.coeffs:
            ang = 2.0 * np.pi * (k1 * b[..., 0] + k2 * b[..., 1])
            d = -ac * np.sin(ang) + as_ * np.cos(ang)
            g[..., 0] += 2.0 * np.pi * k1 * d
            g[..., 1] += 2.0 * np.pi * k2 * d
        return g

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        b = p[..., :2]
        s = p[..., 2] / self.model.roof
        A = self.model.base_matrix.astype(float)
        Pb = self.base_potential(b)
        PAb = self.base_potential(b @ A.T)
        g = smoothstep(s)
        return (1.0 - g) * Pb + g * PAb

    def flow_derivative(self, p):
        """Exact Lie derivative of u0 along the suspension flow."""
        p = np.asarray(p, dtype=float)
        b = p[..., :2]
        s = p[..., 2] / self.model.roof
        A = self.model.base_matrix.astype(float)
        Pb = self.base_potential(b)
        PAb = self.base_potential(b @ A.T)
        return smoothstep_prime(s) / self.model.roof * (PAb - Pb)

    def lipschitz_estimate(self, n_samples=20000, seed=0):
        """Sampled Lipschitz bound of u0 (gradient sup, with 10% headroom)."""
        rng = np.random.default_rng(seed)
        p = rng.random((n_samples, 3))
        p[:, 2] *= self.model.roof
        A = self.model.base_matrix.astype(float)
        g = smoothstep(p[:, 2] / self.model.roof)
        gp = smoothstep_prime(p[:, 2] / self.model.roof) / self.model.roof
        grad_b = ((1.0 - g)[:, None] * self.base_gradient(p[:, :2])
                  + g[:, None] * (self.base_gradient(p[:, :2] @ A.T) @ A))
        grad_s = gp * (self.base_potential(p[:, :2] @ A.T)
                       - self.base_potential(p[:, :2]))
        norms = np.sqrt((grad_b ** 2).sum(axis=1) + grad_s ** 2)
        return 1.1 * float(norms.max())


def coboundary_observable(model: SuspensionFlow, coeffs=None):
    """phi = L_V[u0] for the closed-form potential; orbit averages are 0."""
    pot = GluePotential(model, coeffs)
    # Lipschitz bound of the derivative field, sampled.
    rng = np.random.default_rng(1)
    p = rng.random((20000, 3))
    p[:, 2] *= model.roof
    vals = pot.flow_derivative(p)
    q = p + 1e-5 * rng.standard_normal(p.shape)
    q[:, :2] %= 1.0
    q[:, 2] = np.clip(q[:, 2], 0.0, model.roof * (1 - 1e-12))
    quot = np.abs(pot.flow_derivative(q) - vals) / np.linalg.norm(q - p, axis=1)
    obs = Observable(
        evaluate=pot.flow_derivative,
        lipschitz_constant=1.2 * float(quot.max()),
        sup_bound=1.05 * float(np.abs(vals).max()),
        name="coboundary",
    )
    return obs, pot


def distance_squared_observable(model: SuspensionFlow, base_point=(0.0, 0.0)):
    """phi(p) = (torus distance of the base to a fixed point)^2.

    Nonnegative and vanishing on the invariant fiber orbit through the fixed
    point, so its ergodic minimizing value is 0.
    """
    b0 = np.asarray(base_point, dtype=float)

    def ev(p):
        p = np.asarray(p, dtype=float)
        d = p[..., :2] - b0
        d = d - np.round(d)
        return (d ** 2).sum(axis=-1)

    # |grad| <= 2 * max torus distance = sqrt(2); headroom for corners of the cell.
    return Observable(evaluate=ev, lipschitz_constant=float(np.sqrt(2.0)),
                      sup_bound=0.5, name="dist2_fixed_orbit")


def grid_table_observable(gridfun, lipschitz=None, name="grid_table"):
    """Observable backed by a tabulated grid function (interpolated)."""
    lip = lipschitz if lipschitz is not None else gridfun.discrete_lipschitz()
    sup = float(np.abs(gridfun.values).max() + abs(gridfun.offset))
    return Observable(evaluate=gridfun, lipschitz_constant=float(lip),
                      sup_bound=sup, name=name)


BUILTIN_FAMILIES = ("constant", "coboundary", "dist2", "grid_table")


def make_observable(model, family, **params):
    """Construct a built-in observable by family name."""
    if family == "constant":
        return constant_observable(params.get("value", 0.0))
    if family == "coboundary":
        obs, _ = coboundary_observable(model, params.get("coeffs"))
        return obs
    if family == "dist2":
        return distance_squared_observable(model, params.get("base_point", (0.0, 0.0)))
    raise ValueError(f"unknown observable family: {family!r}")
