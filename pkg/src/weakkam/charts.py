"""Adapted local flow boxes, Poincare sections, return times and Poincare maps.

Charts on the suspension are built from the global eigen-splitting of the
base matrix: gamma_x(s, u) = f^s(x + iota(u)) with iota embedding chart
coordinates along the (unstable, stable) eigenframe in the base fiber.  All
Poincare maps between such charts are affine, which makes the hyperbolicity
certification exact up to rounding.  Adapted norms are max-norms in the
eigenframe coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import SuspensionFlow


class ConstantConsistencyError(ValueError):
    pass


class CoveringError(RuntimeError):
    def __init__(self, message, witness):
        super().__init__(message)
        self.witness = witness


class AdmissibilityError(RuntimeError):
    def __init__(self, condition):
        super().__init__(f"pair not forward admissible: {condition}")
        self.condition = condition


class NoIntersectionError(RuntimeError):
    pass


@dataclass
class FlowBox:
    """One adapted flow box around a center point.

    ``tilt`` optionally bends the Poincare section: the section is
    { gamma(tilt(u), u) } instead of the flat t=0 slice (used to exercise the
    return-time gradient bound).
    """

    model: SuspensionFlow
    center: np.ndarray
    tau: float
    tilt: object = None

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.frame = self.model.eigen_frame
        self.frame_inv = self.model.eigen_frame_inv

    def adapted_norm(self, v):
        """Max-norm of chart vectors: scalars (t), pairs (u), or triples (t,u)."""
        v = np.asarray(v, dtype=float)
        return np.abs(v).max(axis=-1) if v.shape[-1:] != () else abs(v)

    def embed(self, u):
        """Base-fiber embedding iota: chart u -> base point (mod 1)."""
        u = np.asarray(u, dtype=float)
        b = self.center[:2] + u @ self.frame.T
        return np.mod(b, 1.0)

    def chart_forward(self, t, u):
        """gamma(t, u) = f^t of the embedded section point."""
        u = np.asarray(u, dtype=float)
        t = np.asarray(t, dtype=float)
        b = self.embed(u)
        start = np.empty(np.broadcast_shapes(b[..., 0].shape, t.shape) + (3,))
        start[..., :2] = b
        start[..., 2] = self.center[2]
        return self.model.flow_map(start, t)

    def time_coordinate(self, p):
        """Signed chart time of p's nearest section crossing (branch in
        (-roof/2, roof/2] shifted to the representative closest to 0)."""
        p = np.asarray(p, dtype=float)
        roof = self.model.roof
        dt = p[..., 2] - self.center[2]
        return dt - roof * np.round(dt / roof)

    def chart_inverse(self, p, branch="nearest"):
        """Chart coordinates (t, u) of p.

        ``branch='nearest'`` picks the section crossing closest in time;
        ``branch='forward'`` picks t in (0, roof].  The chart is not globally
        injective on the torus, so u is the minimal-norm representative.
        """
        p = np.asarray(p, dtype=float)
        roof = self.model.roof
        dt = p[..., 2] - self.center[2]
        if branch == "nearest":
            t = dt - roof * np.round(dt / roof)
        elif branch == "forward":
            t = dt - roof * (np.ceil(dt / roof) - 1.0)
        else:
            raise ValueError("branch must be 'nearest' or 'forward'")
        q0 = self.model.flow_map(p, -t)
        db = q0[..., :2] - self.center[:2]
        db = db - np.round(db)
        u = db @ self.frame_inv.T
        return t, u

    def section_gap(self, p):
        """Signed distance (in chart time) of p from the section surface."""
        t, u = self.chart_inverse(p)
        if self.tilt is None:
            return t, u
        return t - self.tilt(u), u


@dataclass
class AtlasConstants:
    sigma_u: float
    sigma_s: float
    eta: float
    rho: float
    eps_rho: float


@dataclass
class FlowBoxAtlas:
    model: SuspensionFlow
    boxes: list
    tau: float
    rho: float
    eps: float
    eps_as: float
    lip_gamma: float
    hyper: AtlasConstants
    covering_report: dict = field(default_factory=dict)

    @property
    def n_gamma(self):
        return len(self.boxes)

    def box_at(self, point):
        """An on-demand flow box centered at an arbitrary manifold point."""
        return FlowBox(self.model, np.asarray(point, dtype=float), self.tau)

    def _box(self, x):
        return self.boxes[x] if isinstance(x, (int, np.integer)) else x

    def diam_omega(self):
        return self.model.diameter()

    def nearest_center(self, p, max_adapted=None):
        """Index of the atlas center whose U_x(eps) chart puts p closest, or
        None if no center is within ``max_adapted`` (default eps)."""
        cap = self.eps if max_adapted is None else max_adapted
        best, best_idx = np.inf, None
        for i, box in enumerate(self.boxes):
            t, u = box.chart_inverse(p)
            d = max(abs(float(t)), float(np.abs(u).max()))
            if d < best:
                best, best_idx = d, i
        if best_idx is None or best >= cap:
            return None
        return best_idx

    def contains_in_u(self, x, p, eps=None):
        """Is p inside U_x(eps) = gamma_x((-eps, eps) x B(eps))?"""
        eps = self.eps if eps is None else eps
        box = self._box(x)
        t, u = box.chart_inverse(p)
        return bool(abs(float(t)) < eps and float(np.abs(u).max()) < eps)


def default_hyper_constants(model: SuspensionFlow, tau, rho):
    """Admissible (sigma_u, sigma_s, eta, eps(rho)) for the model's rates."""
    lu = model.hyperbolicity.lambda_u
    ls = model.hyperbolicity.lambda_s
    sigma_u = float(np.exp(tau * lu / 4.0))
    sigma_s = float(np.exp(tau * ls / 4.0))
    eta = 0.5 * min((sigma_u - 1.0) / 6.0, (1.0 - sigma_s) / 6.0)
    eps_rho = rho * min((sigma_u - 1.0) / 2.0, (1.0 - sigma_s) / 8.0)
    return AtlasConstants(sigma_u=sigma_u, sigma_s=sigma_s, eta=float(eta),
                          rho=float(rho), eps_rho=float(eps_rho))


def check_constants(model, tau, rho, eps, hyper: AtlasConstants):
    lu = model.hyperbolicity.lambda_u
    ls = model.hyperbolicity.lambda_s
    checks = [
        (np.exp(tau * ls / 2.0) < hyper.sigma_s,
         "exp(tau*lambda_s/2) < sigma_s"),
        (hyper.sigma_s < 1.0, "sigma_s < 1"),
        (1.0 < hyper.sigma_u, "1 < sigma_u"),
        (hyper.sigma_u < np.exp(tau * lu / 2.0),
         "sigma_u < exp(tau*lambda_u/2)"),
        (hyper.eta < min((hyper.sigma_u - 1.0) / 6.0,
                         (1.0 - hyper.sigma_s) / 6.0),
         "eta < min((sigma_u-1)/6, (1-sigma_s)/6)"),
        (rho < tau / 3.0, "rho < tau/3"),
        (eps < tau / 2.0, "eps < tau/2"),
    ]
    for ok, name in checks:
        if not ok:
            raise ConstantConsistencyError(f"violated: {name}")


def _measure_lip_gamma(model, box: FlowBox, n_samples=400, seed=0):
    """Sampled C^1 bounds of the chart and its inverse over the full domain."""
    rng = np.random.default_rng(seed)
    tau = box.tau
    t = rng.uniform(-2 * tau, 2 * tau, n_samples)
    u = rng.uniform(-1.0, 1.0, (n_samples, 2))
    base = box.chart_forward(t, u)
    fd = 1e-6
    worst_fwd = 0.0
    for d_t, d_u in ((fd, (0.0, 0.0)), (0.0, (fd, 0.0)), (0.0, (0.0, fd))):
        moved = box.chart_forward(t + d_t, u + np.asarray(d_u))
        dist = model.distance(moved, base)
        step = max(abs(d_t), abs(d_u[0]), abs(d_u[1]))  # adapted max-norm
        worst_fwd = max(worst_fwd, float(dist.max()) / step)
    # Inverse: adapted chart displacement per unit ambient displacement.
    worst_inv = 0.0
    dirs = rng.standard_normal((8, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    for d in dirs:
        moved = base + fd * d
        moved[:, :2] %= 1.0
        keep = (moved[:, 2] >= 0) & (moved[:, 2] < model.roof)
        t2, u2 = box.chart_inverse(moved[keep])
        dt = np.abs(t2 - t[keep])
        duu = np.abs(u2 - u[keep]).max(axis=1)
        adapted = np.maximum(dt, duu)
        # Exclude branch flips (wrapped representatives).
        good = adapted < 0.5
        if good.any():
            worst_inv = max(worst_inv, float(adapted[good].max()) / fd)
    return max(1.0, worst_fwd, worst_inv)


def build_atlas(model: SuspensionFlow, tau, rho, eps, n_points=None,
                n_cover_samples=2000, seed=0):
    """Uniform-net atlas whose U_x(eps) boxes cover the manifold.

    Net spacing is eps/2 in the adapted metric.  ``n_points`` optionally
    overrides the per-axis base net count.  Raises CoveringError with a
    witness if certification fails.
    """
    hyper = default_hyper_constants(model, tau, rho)
    check_constants(model, tau, rho, eps, hyper)
    half = eps / 2.0
    if n_points is None:
        # smallest base net with adapted cell radius <= eps/2
        m = 2
        while True:
            d = 1.0 / m
            corners = np.array([[d / 2, d / 2], [d / 2, -d / 2]])
            rad = np.abs(corners @ model.eigen_frame_inv.T).max()
            if rad <= half:
                break
            m += 1
    else:
        m = int(n_points)
    n_levels = max(1, int(np.ceil(model.roof / half)))
    boxes = []
    for k in range(n_levels):
        s0 = k * model.roof / n_levels
        for i in range(m):
            for j in range(m):
                center = np.array([i / m, j / m, s0])
                boxes.append(FlowBox(model, center, tau))
    atlas = FlowBoxAtlas(model=model, boxes=boxes, tau=float(tau),
                         rho=float(rho), eps=float(eps),
                         eps_as=float(eps / 2.0),
                         lip_gamma=_measure_lip_gamma(model, boxes[0]),
                         hyper=hyper)
    # Covering certification by sampling.
    rng = np.random.default_rng(seed)
    pts = rng.random((n_cover_samples, 3))
    pts[:, 2] *= model.roof
    uncovered = np.ones(n_cover_samples, dtype=bool)
    for box in boxes:
        if not uncovered.any():
            break
        t, u = box.chart_inverse(pts[uncovered])
        inside = (np.abs(t) < eps) & (np.abs(u).max(axis=1) < eps)
        idx = np.nonzero(uncovered)[0]
        uncovered[idx[inside]] = False
    if uncovered.any():
        w = pts[np.nonzero(uncovered)[0][0]]
        raise CoveringError("atlas does not cover the manifold", witness=w)
    atlas.covering_report = {"n_samples": n_cover_samples, "uncovered": 0,
                             "n_boxes": len(boxes)}
    return atlas


def return_time(atlas: FlowBoxAtlas, x, y, q, t_hint=None, tol_factor=1e-12):
    """Local return time: the t near t_hint with f^t(gamma_x(0,q)) on Sigma_y.

    Bracketing scans integrator-sized steps around the hint, then bisection to
    tol_factor * tau.  Default hint is the forward time-offset of y's center
    in x's chart.
    """
    box_x = atlas._box(x)
    box_y = atlas._box(y)
    z = box_x.chart_forward(0.0, np.asarray(q, dtype=float))
    tau = atlas.tau
    if t_hint is None:
        t_hint, _ = box_x.chart_inverse(box_y.center, branch="forward")
        t_hint = float(t_hint)
    span = 0.45 * atlas.model.roof
    ts = t_hint + np.linspace(-span, span, 41)
    gaps = np.array([float(box_y.section_gap(atlas.model.flow_map(z, t))[0])
                     for t in ts])
    hit = None
    for i in range(len(ts) - 1):
        if gaps[i] == 0.0:
            hit = (ts[i], ts[i])
            break
        if gaps[i] * gaps[i + 1] < 0 and abs(gaps[i]) < tau / 2 \
                and abs(gaps[i + 1]) < tau / 2:
            hit = (ts[i], ts[i + 1])
            break
    if hit is None:
        raise NoIntersectionError("no section crossing near the hinted time")
    a, b = hit
    ga = float(box_y.section_gap(atlas.model.flow_map(z, a))[0])
    while b - a > tol_factor * tau:
        mid = 0.5 * (a + b)
        gm = float(box_y.section_gap(atlas.model.flow_map(z, mid))[0])
        if gm == 0.0:
            return mid
        if ga * gm < 0:
            b = mid
        else:
            a, ga = mid, gm
    return 0.5 * (a + b)


def check_forward_admissible(atlas: FlowBoxAtlas, x, y):
    """Def-style forward admissibility of the ordered pair (x, y)."""
    box_x = atlas._box(x)
    box_y = atlas._box(y)
    t0, u0 = box_x.chart_inverse(box_y.center, branch="forward")
    if not (abs(float(t0) - atlas.tau) < atlas.rho):
        raise AdmissibilityError(
            f"y not within rho of time-tau slice (t0={float(t0):.4f})")
    if not (float(np.abs(u0).max()) < atlas.rho):
        raise AdmissibilityError("y outside B_x(rho) transversally")
    f0 = poincare_map(atlas, x, y, np.zeros(2), strict=False)
    if not (float(np.abs(f0).max()) <= atlas.hyper.eps_rho + 1e-12):
        raise AdmissibilityError(
            f"f_xy(0) outside B_y(eps(rho)) (norm {float(np.abs(f0).max()):.3e})")
    return True


def poincare_map(atlas: FlowBoxAtlas, x, y, q, strict=True, t_hint=None):
    """f_{x,y}(q): follow the flow from gamma_x(0, q) to Sigma_y, in y-chart
    coordinates.  ``strict`` enforces forward admissibility first."""
    if strict:
        check_forward_admissible(atlas, x, y)
    box_x = atlas._box(x)
    box_y = atlas._box(y)
    q = np.asarray(q, dtype=float)
    t = return_time(atlas, x, y, q, t_hint=t_hint)
    w = atlas.model.flow_map(box_x.chart_forward(0.0, q), t)
    _, u = box_y.chart_inverse(w)
    return u


@dataclass
class LocalHyperbolicMap:
    """A local Poincare map with its linear part in adapted coordinates."""

    f_map: object
    linear_part: np.ndarray
    offset: np.ndarray  # f(0)
    rho: float

    def __call__(self, q):
        return self.f_map(np.asarray(q, dtype=float))

    def jacobian(self, q, fd=1e-7):
        q = np.asarray(q, dtype=float)
        cols = []
        for k in range(2):
            e = np.zeros(2)
            e[k] = fd
            cols.append((self.f_map(q + e) - self.f_map(q - e)) / (2 * fd))
        return np.column_stack(cols)


def from_poincare(atlas: FlowBoxAtlas, x, y, strict=False, t_hint=None):
    """LocalHyperbolicMap wrapping the (x, y) Poincare map."""
    def f(q):
        return poincare_map(atlas, x, y, q, strict=strict, t_hint=t_hint)

    fd = 1e-7
    f0 = f(np.zeros(2))
    cols = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = fd
        cols.append((f(e) - f(-e)) / (2 * fd))
    A = np.column_stack(cols)
    return LocalHyperbolicMap(f_map=f, linear_part=A, offset=f0, rho=atlas.rho)


def affine_poincare(atlas: FlowBoxAtlas, x, y):
    """Closed-form Poincare map for flat sections on a constant-roof suspension.

    The return time is constant on the chart, so the section-to-section map is
    the base automorphism iterated once per roof crossing: in eigenframe
    coordinates f(q) = diag(lam^k, lam^-k) q + f(0).  Exact; no root-finding.
    """
    model = atlas.model
    box_x = atlas._box(x)
    box_y = atlas._box(y)
    roof = model.roof
    dt = box_y.center[2] - box_x.center[2]
    t_star = dt - roof * (np.ceil(dt / roof) - 1.0)  # forward branch in (0, roof]
    k = int(round((box_x.center[2] + t_star - box_y.center[2]) / roof))
    lam = model.unstable_eigenvalue
    linear = np.diag([lam ** k, lam ** (-k)])
    image = model.flow_map(np.array([box_x.center[0], box_x.center[1],
                                     box_x.center[2]]), t_star)
    db = image[:2] - box_y.center[:2]
    db = db - np.round(db)
    offset = db @ model.eigen_frame_inv.T

    def f(q):
        return offset + np.asarray(q, dtype=float) @ linear.T

    return LocalHyperbolicMap(f_map=f, linear_part=linear, offset=offset,
                              rho=atlas.rho)


@dataclass
class HyperbolicCertificate:
    sigma_u: float
    sigma_s: float
    coupling_u: float
    coupling_s: float
    lip_nonlinear: float
    offset_norm: float
    checks: dict

    @property
    def passed(self):
        return all(v["ok"] for v in self.checks.values())


def certify_hyperbolic(hmap: LocalHyperbolicMap, n_samples=200,
                       required: AtlasConstants = None, seed=0):
    """Measure the six adapted-hyperbolic-map quantities by sampling.

    Block convention: coordinate 0 is unstable, coordinate 1 stable; the
    adapted norm is the max-norm.  When ``required`` is given, pass/fail
    margins are reported against its constants.
    """
    A = hmap.linear_part
    sigma_u = abs(float(A[0, 0]))
    sigma_s = abs(float(A[1, 1]))
    du = abs(float(A[0, 1]))
    dsc = abs(float(A[1, 0]))
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-hmap.rho / 2, hmap.rho / 2, (n_samples, 2))
    vals = np.array([hmap(p) - A @ p for p in pts])
    lip = 0.0
    for _ in range(n_samples):
        i, j = rng.integers(0, n_samples, 2)
        if i == j:
            continue
        num = float(np.abs(vals[i] - vals[j]).max())
        den = float(np.abs(pts[i] - pts[j]).max())
        if den > 1e-12:
            lip = max(lip, num / den)
    off = float(np.abs(hmap.offset).max())
    checks = {}
    if required is not None:
        checks = {
            "expansion": {"ok": sigma_u >= required.sigma_u,
                          "margin": sigma_u - required.sigma_u},
            "contraction": {"ok": sigma_s <= required.sigma_s,
                            "margin": required.sigma_s - sigma_s},
            "coupling_u": {"ok": du <= required.eta,
                           "margin": required.eta - du},
            "coupling_s": {"ok": dsc <= required.eta,
                           "margin": required.eta - dsc},
            "nonlinearity": {"ok": lip <= required.eta,
                             "margin": required.eta - lip},
            "offset": {"ok": off <= required.eps_rho,
                       "margin": required.eps_rho - off},
        }
    return HyperbolicCertificate(sigma_u=sigma_u, sigma_s=sigma_s,
                                 coupling_u=du, coupling_s=dsc,
                                 lip_nonlinear=lip, offset_norm=off,
                                 checks=checks)
