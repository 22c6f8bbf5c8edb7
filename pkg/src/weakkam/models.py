"""Model flows: torus suspension of a hyperbolic automorphism and generic vector fields.

Points live in R^{d+1}.  For the suspension model the coordinates are
(x1, x2, s) on T^2 x [0, roof) with the gluing (x, roof) ~ (A x, 0); the flow
is the unit translation in s.  Generic flows are integrated with a fixed-step
RK4 scheme on a declared domain box.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np


class DomainEscapeError(RuntimeError):
    """Raised when a trajectory leaves the declared (non-periodic) domain box."""

    def __init__(self, message, exit_time=None):
        super().__init__(message)
        self.exit_time = exit_time


class HorizonError(ValueError):
    """Requested integration time exceeds the configured horizon."""


@dataclass(frozen=True)
class HyperbolicityData:
    """Expansion/contraction rates and the uniformity constant of a splitting."""

    lambda_s: float
    lambda_u: float
    c_hyp: float
    du: int
    ds: int

    def __post_init__(self):
        if not (self.lambda_s < 0.0 < self.lambda_u):
            raise ValueError("need lambda_s < 0 < lambda_u")
        if self.c_hyp < 1.0:
            raise ValueError("uniformity constant must be >= 1")
        if self.du < 1:
            raise ValueError("unstable dimension must be >= 1")


@dataclass(frozen=True)
class Observable:
    """Scalar Lipschitz observable.  ``evaluate`` must accept (..., d+1) arrays."""

    evaluate: Callable[[np.ndarray], np.ndarray]
    lipschitz_constant: float
    sup_bound: float
    name: str = "observable"

    def __call__(self, points):
        return self.evaluate(np.asarray(points, dtype=float))


@dataclass(frozen=True)
class SuspensionFlow:
    """Constant-roof suspension of an integer matrix A on T^2 with |det A| = 1.

    The default base map is [[2, 1], [1, 1]].  The whole manifold is a locally
    maximal hyperbolic set for the suspension flow, with one-dimensional
    stable/unstable bundles spanned by the eigenvectors of A.
    """

    base_matrix: np.ndarray = field(
        default_factory=lambda: np.array([[2, 1], [1, 1]], dtype=np.int64))
    roof: float = 1.0
    max_horizon: float = 64.0

    def __post_init__(self):
        A = np.asarray(self.base_matrix, dtype=np.int64)
        if A.shape != (2, 2):
            raise ValueError("base matrix must be 2x2")
        det = int(round(np.linalg.det(A)))
        if abs(det) != 1:
            raise ValueError("base matrix must have determinant +-1")
        if abs(A[0, 0] + A[1, 1]) <= 2:
            raise ValueError("base matrix must be hyperbolic (|trace| > 2)")
        if self.roof <= 0:
            raise ValueError("roof must be positive")
        object.__setattr__(self, "base_matrix", A)
        # A is integer with det +-1, so the inverse is integer as well.
        inv = np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]], dtype=np.int64) * det
        object.__setattr__(self, "base_inverse", inv)
        evals, evecs = np.linalg.eig(A.astype(float))
        iu = int(np.argmax(np.abs(evals)))
        lam = float(np.abs(evals[iu]))
        eu = evecs[:, iu].real
        es = evecs[:, 1 - iu].real
        eu = eu / np.linalg.norm(eu)
        es = es / np.linalg.norm(es)
        # Fix signs so the frame is reproducible.
        if eu[0] < 0:
            eu = -eu
        if es[0] < 0:
            es = -es
        object.__setattr__(self, "unstable_eigenvalue", lam)
        object.__setattr__(self, "stable_eigenvalue", 1.0 / lam)
        object.__setattr__(self, "unstable_direction", eu)
        object.__setattr__(self, "stable_direction", es)
        frame = np.column_stack([eu, es])
        object.__setattr__(self, "eigen_frame", frame)
        object.__setattr__(self, "eigen_frame_inv", np.linalg.inv(frame))
        lam_u = np.log(lam) / self.roof
        object.__setattr__(self, "hyperbolicity", HyperbolicityData(
            lambda_s=-lam_u, lambda_u=lam_u, c_hyp=1.0, du=1, ds=1))

    @property
    def dimension(self):
        return 3

    @property
    def sup_norm_bound(self):
        return 1.0  # V = d/ds, unit speed

    def _apply_base(self, base, n):
        """Apply A^n (mod 1) to base coordinates (..., 2), stepwise for accuracy."""
        b = np.mod(np.asarray(base, dtype=float), 1.0)
        n = np.asarray(n, dtype=np.int64)
        A = self.base_matrix.astype(float)
        Ainv = self.base_inverse.astype(float)
        rem = np.broadcast_to(n, b.shape[:-1]).copy()
        b = np.broadcast_to(b, rem.shape + (2,)).copy()
        while True:
            pos = rem > 0
            neg = rem < 0
            if not (pos.any() or neg.any()):
                break
            if pos.any():
                b[pos] = np.mod(b[pos] @ A.T, 1.0)
                rem[pos] -= 1
            if neg.any():
                b[neg] = np.mod(b[neg] @ Ainv.T, 1.0)
                rem[neg] += 1
        return b

    def flow_map(self, x, t):
        """Time-t flow.  Exact up to rounding: translate s, apply A at crossings."""
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        if np.any(np.abs(t) > self.max_horizon):
            raise HorizonError(f"|t| exceeds max horizon {self.max_horizon}")
        s_tot = x[..., 2] + t
        n = np.floor(s_tot / self.roof).astype(np.int64)
        s_new = s_tot - n * self.roof
        # Guard against s_new == roof from rounding.
        hit = s_new >= self.roof
        if np.any(hit):
            s_new = np.where(hit, s_new - self.roof, s_new)
            n = n + hit.astype(np.int64)
        shape = np.broadcast_shapes(x[..., 0].shape, t.shape)
        b = self._apply_base(np.broadcast_to(x[..., :2], shape + (2,)), n)
        out = np.empty(shape + (3,))
        out[..., :2] = b
        out[..., 2] = s_new
        return out

    def velocity(self, x):
        """The generating vector field V = d/ds, in suspension coordinates."""
        x = np.asarray(x, dtype=float)
        v = np.zeros_like(x)
        v[..., 2] = 1.0
        return v

    def difference(self, q, p):
        """Lifted displacement q - p, choosing the gluing branch of least norm.

        Returns (..., 3) vectors; the base part is a representative of the
        torus difference after optionally carrying q across the roof.
        """
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        best = None
        best_norm = None
        A = self.base_matrix.astype(float)
        Ainv = self.base_inverse.astype(float)
        for m, M in ((-1, A), (0, None), (1, Ainv)):
            # (b, s) ~ (A^{-m} b, s + m*roof): lift q to the copy nearest p.
            bq = q[..., :2] if M is None else np.mod(q[..., :2] @ M.T, 1.0)
            db = bq - p[..., :2]
            db = db - np.round(db)
            ds = q[..., 2] + m * self.roof - p[..., 2]
            d = np.concatenate([db, ds[..., None]], axis=-1)
            nrm = np.linalg.norm(d, axis=-1)
            if best is None:
                best, best_norm = d, nrm
            else:
                better = nrm < best_norm
                best = np.where(better[..., None], d, best)
                best_norm = np.where(better, nrm, best_norm)
        return best

    def distance(self, q, p):
        """Ambient distance on the suspension (Euclidean product metric)."""
        return np.linalg.norm(self.difference(q, p), axis=-1)

    def diameter(self, n_samples=4096, seed=0):
        """Measured diameter of the manifold under :meth:`distance`."""
        rng = np.random.default_rng(seed)
        pts = rng.random((n_samples, 3))
        pts[:, 2] *= self.roof
        # Distance to a fixed reference set is enough for a sharp lower bound;
        # the flat upper bound sqrt(1/2 + (roof/2)^2) caps it.
        ref = np.array([[0.0, 0.0, 0.0], [0.5, 0.5, 0.5 * self.roof]])
        d = max(float(self.distance(pts, ref[0]).max()),
                float(self.distance(pts, ref[1]).max()))
        cap = float(np.sqrt(0.5 + (0.5 * self.roof) ** 2))
        return min(max(d, 0.0), cap) if d > 0 else cap


@dataclass(frozen=True)
class VectorFieldSpec:
    """User-supplied vector field on a (partially periodic) box, RK4 fixed step."""

    dimension: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    sup_norm_bound: float
    lipschitz_bound: float
    domain_box: np.ndarray = None  # (d+1, 2) lo/hi per axis
    periodic: tuple = None  # per-axis periodicity flags
    h_int: float = 1e-3
    max_horizon: float = 64.0

    def __post_init__(self):
        d = self.dimension
        box = self.domain_box
        if box is None:
            box = np.array([[0.0, 1.0]] * (d + 1))
        object.__setattr__(self, "domain_box", np.asarray(box, dtype=float))
        per = self.periodic
        if per is None:
            per = (True,) * (d + 1)
        object.__setattr__(self, "periodic", tuple(bool(b) for b in per))

    def velocity(self, x):
        v = np.asarray(self.evaluate(np.asarray(x, dtype=float)), dtype=float)
        if np.any(np.linalg.norm(v, axis=-1) == 0.0):
            raise ValueError("vector field vanishes at a sampled point")
        return v

    def _wrap(self, x, t_now):
        lo = self.domain_box[:, 0]
        hi = self.domain_box[:, 1]
        width = hi - lo
        x = x.copy()
        for ax, per in enumerate(self.periodic):
            if per:
                x[..., ax] = lo[ax] + np.mod(x[..., ax] - lo[ax], width[ax])
            else:
                if np.any(x[..., ax] < lo[ax]) or np.any(x[..., ax] > hi[ax]):
                    raise DomainEscapeError(
                        f"trajectory left the domain box on axis {ax}",
                        exit_time=t_now)
        return x

    def flow_map(self, x, t):
        """Fixed-step RK4 integration of the field, wrapping periodic axes."""
        x = np.asarray(x, dtype=float)
        t = float(t)
        if abs(t) > self.max_horizon:
            raise HorizonError(f"|t| exceeds max horizon {self.max_horizon}")
        n = max(1, int(np.ceil(abs(t) / self.h_int)))
        h = t / n
        y = x.copy()
        f = self.velocity
        for k in range(n):
            k1 = f(y)
            k2 = f(y + 0.5 * h * k1)
            k3 = f(y + 0.5 * h * k2)
            k4 = f(y + h * k3)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            y = self._wrap(y, (k + 1) * h)
        return y

    def difference(self, q, p):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        d = q - p
        width = self.domain_box[:, 1] - self.domain_box[:, 0]
        for ax, per in enumerate(self.periodic):
            if per:
                d[..., ax] -= width[ax] * np.round(d[..., ax] / width[ax])
        return d

    def distance(self, q, p):
        return np.linalg.norm(self.difference(q, p), axis=-1)


def lie_derivative(model, u, x, delta):
    """Central-difference derivative of u along the flow: (u(f^d x) - u(f^-d x))/2d.

    ``u`` is any callable on point arrays (GridFunctions are callable).  When u
    is grid-backed, ``delta`` should be at least twice the grid spacing so the
    O(delta^2) truncation dominates interpolation error.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    spacing = getattr(u, "max_spacing", None)
    if spacing is not None and delta < 2.0 * spacing:
        raise ValueError("delta must be >= 2x grid spacing for grid functions")
    xf = model.flow_map(x, delta)
    xb = model.flow_map(x, -delta)
    return (np.asarray(u(xf), dtype=float) - np.asarray(u(xb), dtype=float)) / (2.0 * delta)


def periodic_orbits(model, max_period):
    """All periodic orbits of the suspension with base period <= max_period.

    Solves (A^n - I) x = 0 (mod 1) exactly over the rationals and groups the
    fixed points of A^n into orbits of the base map.  Returns a list of
    (base_point, flow_period) with each orbit reported once through a point of
    minimal period.
    """
    if max_period > 12:
        raise ValueError("max_period capped at 12 (orbit count grows like lambda^n)")
    A = [[int(v) for v in row] for row in model.base_matrix]
    seen = set()
    orbits = []
    for n in range(1, max_period + 1):
        M = _int_mat_pow(A, n)
        M = [[M[0][0] - 1, M[0][1]], [M[1][0], M[1][1] - 1]]
        det = M[0][0] * M[1][1] - M[0][1] * M[1][0]
        if det == 0:
            continue
        inv = [[Fraction(M[1][1], det), Fraction(-M[0][1], det)],
               [Fraction(-M[1][0], det), Fraction(M[0][0], det)]]
        # Integer points of M([0,1)^2) give all solutions x = M^{-1} k in [0,1)^2.
        corners = [(0, 0), (M[0][0], M[1][0]), (M[0][1], M[1][1]),
                   (M[0][0] + M[0][1], M[1][0] + M[1][1])]
        k1s = range(min(c[0] for c in corners) - 1, max(c[0] for c in corners) + 2)
        k2s = range(min(c[1] for c in corners) - 1, max(c[1] for c in corners) + 2)
        for k1 in k1s:
            for k2 in k2s:
                x1 = inv[0][0] * k1 + inv[0][1] * k2
                x2 = inv[1][0] * k1 + inv[1][1] * k2
                if 0 <= x1 < 1 and 0 <= x2 < 1:
                    pt = (x1, x2)
                    if pt in seen:
                        continue
                    orbit, per = _base_orbit(A, pt)
                    seen.update(orbit)
                    if per <= max_period:
                        rep = min(orbit)
                        orbits.append((np.array([float(rep[0]), float(rep[1])]),
                                       per * model.roof))
    orbits.sort(key=lambda o: (o[1], o[0][0], o[0][1]))
    return orbits


def _int_mat_pow(A, n):
    M = [[1, 0], [0, 1]]
    for _ in range(n):
        M = [[M[0][0] * A[0][0] + M[0][1] * A[1][0],
              M[0][0] * A[0][1] + M[0][1] * A[1][1]],
             [M[1][0] * A[0][0] + M[1][1] * A[1][0],
              M[1][0] * A[0][1] + M[1][1] * A[1][1]]]
    return M


def _base_orbit(A, pt):
    """Exact orbit of a rational point under x -> Ax mod 1."""
    orbit = [pt]
    cur = pt
    while True:
        cur = ((A[0][0] * cur[0] + A[0][1] * cur[1]) % 1,
               (A[1][0] * cur[0] + A[1][1] * cur[1]) % 1)
        if cur == pt:
            break
        orbit.append(cur)
        if len(orbit) > 4096:
            raise RuntimeError("orbit closure not found (non-rational point?)")
    return orbit, len(orbit)


def birkhoff_integral(model, phi, x, t, quadrature_step):
    """Composite-midpoint quadrature of phi along the orbit of x over [0, t].

    ``x`` may be a single point or a batch (..., d+1); the orbit is advanced
    incrementally so the step count is shared across the batch.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    n = max(1, int(np.ceil(t / quadrature_step)))
    h = t / n
    p = model.flow_map(x, 0.5 * h)
    total = np.asarray(phi(p), dtype=float).copy()
    for _ in range(n - 1):
        p = model.flow_map(p, h)
        total += np.asarray(phi(p), dtype=float)
    return total * h
