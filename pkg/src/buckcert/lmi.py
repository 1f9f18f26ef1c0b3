"""Matrix-inequality certification: existence (Eq.-25/26-type LMI in P) and
global stability (the four-block LMI in H, eps, nu), with an embedded
max-margin feasibility solver and independent eigenvalue verification.

The solver maximises t subject to G_c(z) >= t*I over all constraints using a
log-det barrier with damped Newton steps (path-following in the barrier
weight).  Every "feasible" verdict is re-checked from scratch: eigenvalue
margins are recomputed with the Jacobi eigensolver in original (unbalanced)
coordinates and must clear margin_rel times the constraint norm.  Solver
failure can therefore never produce a false positive; "infeasible" always
means infeasible-within-budget.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import numerics
from .kernels import cholesky_kernel, solve_kernel
from .model import LtiSystem, RampParams, assemble, shift
from .periodic import find_modes, l1_open_loop_sweep, L1_SOURCE_OPEN_LOOP

MARGIN_REL_DEFAULT = 1e-9
H_BOX_DEFAULT = 1e8
EPS_BOX_FACTOR = 10.0   # eps in (0, factor * sigma_star / T]
NU_BOX_FACTOR = 10.0    # nu in (0, factor * sigma_star]

TARGET_EXISTENCE = "existence"    # Eq. 25 + the P-LMI sweep
TARGET_STABILITY = "stability"    # periodic mode + the (H, eps, nu) LMI


class EpsilonOutOfRange(Exception):
    pass


class SectorViolated(Exception):
    """sigma_star - T*L1 <= 0: the sector bound degenerates."""


class NoBracket(Exception):
    """Bisection interval does not straddle the feasibility boundary."""


# ---------------------------------------------------------------------------
# problem containers

@dataclass
class AffineMatrixConstraint:
    name: str
    constant: np.ndarray          # (d, d), symmetric
    coefficients: np.ndarray      # (n_vars, d, d), symmetric slices
    strict: bool = True

    @property
    def dim(self):
        return self.constant.shape[0]

    def value(self, z):
        return self.constant + np.tensordot(z, self.coefficients, axes=1)


@dataclass
class LmiProblem:
    variables: List[str]
    constraints: List[AffineMatrixConstraint]
    box_lo: np.ndarray
    box_hi: np.ndarray
    start: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_vars(self):
        return len(self.variables)


@dataclass
class LmiCertificate:
    feasible: bool
    values: Dict[str, float]          # original-coordinate variable values
    margins: Dict[str, float]         # min eigenvalue per constraint
    margin_norms: Dict[str, float]    # Frobenius norm per constraint value
    iterations: int
    restarts_used: int
    seed: int
    solver: str = "logdet-barrier-newton"
    notes: List[str] = field(default_factory=list)


@dataclass
class Theorem2Data:
    kappa: float      # -CB
    kappa1: float     # -CAB
    kappa2: float     # T / pi
    L1: float
    sigma_star: float
    T: float
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


# ---------------------------------------------------------------------------
# helpers

def sym_basis(m):
    """Symmetric basis matrices matching the upper-triangle variable order."""
    out = []
    for i in range(m):
        for j in range(i, m):
            e = np.zeros((m, m))
            e[i, j] = 1.0
            e[j, i] = 1.0
            out.append((i, j, e))
    return out


def pack_symmetric(h):
    m = h.shape[0]
    return np.array([h[i, j] for i, j, _ in sym_basis(m)])


def unpack_symmetric(vals, m):
    h = np.zeros((m, m))
    for k, (i, j, _) in enumerate(sym_basis(m)):
        h[i, j] = vals[k]
        h[j, i] = vals[k]
    return h


def balance_system(a, b, c):
    """Diagonal similarity scaling (powers of two) equalising row/column
    magnitudes of (A, B, C).  Returns (Ab, Bb, Cb, s) with Ab = D^-1 A D,
    Bb = D^-1 B, Cb = C D for D = diag(s)."""
    n = a.shape[0]
    s = np.ones(n)
    ab, bb, cb = a.copy(), b.copy(), c.copy()
    for _ in range(32):
        done = True
        for i in range(n):
            r = np.sum(np.abs(ab[i, :])) - abs(ab[i, i]) + abs(bb[i])
            col = np.sum(np.abs(ab[:, i])) - abs(ab[i, i]) + abs(cb[i])
            if r == 0.0 or col == 0.0:
                continue
            f = 1.0
            while r > 2.0 * col:
                r /= 2.0
                col *= 2.0
                f *= 2.0
            while col > 2.0 * r:
                col /= 2.0
                r *= 2.0
                f /= 2.0
            if f != 1.0:
                done = False
                s[i] *= f
                ab[i, :] /= f
                ab[:, i] *= f
                bb[i] /= f
                cb[i] *= f
        if done:
            break
    return ab, bb, cb, s


def lyapunov(a, q):
    """Solve A^T X + X A = -Q via the Kronecker linear system."""
    m = a.shape[0]
    k = np.kron(np.eye(m), a.T) + np.kron(a.T, np.eye(m))
    x = numerics.solve(k, -q.reshape(-1))
    x = x.reshape(m, m)
    return 0.5 * (x + x.T)


def gamma_value(sys: LtiSystem, ramp: RampParams):
    """gamma = sigma_star / T - min{0, CB}."""
    cb = float(sys.C @ sys.B)
    return ramp.sigma_star / ramp.T - min(0.0, cb)


def l_matrix(a, b, h):
    """Left-hand block matrix of the stability LMI, linear in H."""
    m = a.shape[0]
    out = np.zeros((m + 3, m + 3))
    out[:m, :m] = h @ a + a.T @ h
    hab = h @ (a @ b)
    out[:m, m] = hab
    out[m, :m] = hab
    hb = h @ b
    out[:m, m + 1] = hb
    out[m + 1, :m] = hb
    return out


def r_matrix(data: Theorem2Data, eps, nu):
    """Right-hand block matrix of the stability LMI, affine in (eps, nu)."""
    a, b, c = data.A, data.B, data.C
    m = a.shape[0]
    k2 = data.kappa2
    out = np.zeros((m + 3, m + 3))
    out[:m, m + 1] = -0.5 * c
    out[m + 1, :m] = -0.5 * c
    atc = k2 * (a.T @ c)
    out[:m, m + 2] = atc
    out[m + 2, :m] = atc
    out[m, m] = 3.0 * nu / data.T ** 2
    out[m, m + 2] = -k2 * data.kappa1
    out[m + 2, m] = -k2 * data.kappa1
    out[m + 1, m + 1] = (data.sigma_star - data.T * data.L1 - nu - eps
                         - data.T * abs(data.kappa))
    out[m + 1, m + 2] = -k2 * data.kappa
    out[m + 2, m + 1] = -k2 * data.kappa
    out[m + 2, m + 2] = eps
    return out


# ---------------------------------------------------------------------------
# problem builders

def _theorem1_constraints(a, b, c, eps, gamma):
    m = a.shape[0]
    basis = sym_basis(m)
    n = len(basis)
    bbt = np.outer(b, b) / (2.0 * eps)

    coef_lyap = np.zeros((n, m, m))
    coef_pd = np.zeros((n, m, m))
    coef_gam = np.zeros((n, 1, 1))
    v = c @ a
    for k, (_, _, e) in enumerate(basis):
        coef_lyap[k] = -(a @ e + e @ a.T + 2.0 * eps * e)
        coef_pd[k] = e
        coef_gam[k, 0, 0] = -float(v @ e @ v)
    return [
        AffineMatrixConstraint("decay", -bbt, coef_lyap, strict=False),
        AffineMatrixConstraint("P_pd", np.zeros((m, m)), coef_pd, strict=True),
        AffineMatrixConstraint("gamma", np.array([[gamma ** 2]]), coef_gam,
                               strict=True),
    ]


def build_theorem1(sys: LtiSystem, ramp: RampParams, eps,
                   balance=True) -> LmiProblem:
    """Fixed-eps existence LMI in the symmetric variable P."""
    eps = float(eps)
    eps_max = numerics.hurwitz_margin(sys.A)
    if not 0.0 < eps < eps_max:
        raise EpsilonOutOfRange(
            f"eps = {eps:.6g} outside (0, {eps_max:.6g})")
    if balance:
        ab, bb, cb, s = balance_system(sys.A, sys.B, sys.C)
    else:
        ab, bb, cb, s = sys.A, sys.B, sys.C, np.ones(sys.m)
    gamma = gamma_value(sys, ramp)
    m = sys.m
    constraints = _theorem1_constraints(ab, bb, cb, eps, gamma)
    names = [f"P[{i},{j}]" for i, j, _ in sym_basis(m)]
    n = len(names)
    lo = np.full(n, -H_BOX_DEFAULT)
    hi = np.full(n, H_BOX_DEFAULT)

    # warm start: the Loewner-minimal feasible point is the Lyapunov solution
    # of (A+eps I)P + P(A+eps I)^T = -BB^T/(2 eps); pad the right side to sit
    # strictly inside the nonstrict constraint
    aeps = ab + eps * np.eye(m)
    q = np.outer(bb, bb) / (2.0 * eps)
    start = None
    try:
        p0 = lyapunov(aeps.T, q + 1e-3 * np.linalg.norm(q) * np.eye(m))
        start = pack_symmetric(p0)
    except numerics.SingularMatrix:
        pass
    return LmiProblem(variables=names, constraints=constraints,
                      box_lo=lo, box_hi=hi, start=start,
                      meta={"kind": "theorem1", "balance": s, "m": m,
                            "eps": eps, "gamma": gamma})


def theorem2_data(sys: LtiSystem, ramp: RampParams, l1) -> Theorem2Data:
    kappa = -float(sys.C @ sys.B)
    kappa1 = -float(sys.C @ (sys.A @ sys.B))
    data = Theorem2Data(kappa=kappa, kappa1=kappa1, kappa2=ramp.T / math.pi,
                        L1=float(l1), sigma_star=ramp.sigma_star, T=ramp.T,
                        A=sys.A.copy(), B=sys.B.copy(), C=sys.C.copy())
    if data.sigma_star - data.T * data.L1 <= 0.0:
        raise SectorViolated(
            f"sigma_star - T*L1 = {data.sigma_star - data.T * data.L1:.6g} <= 0")
    return data


def build_theorem2(sys: LtiSystem, ramp: RampParams, l1,
                   balance=True) -> LmiProblem:
    """Stability LMI: R(eps, nu) - L(H) > 0, H > 0, eps > 0, nu > 0."""
    data = theorem2_data(sys, ramp, l1)
    if balance:
        ab, bb, cb, s = balance_system(sys.A, sys.B, sys.C)
    else:
        ab, bb, cb, s = sys.A, sys.B, sys.C, np.ones(sys.m)
    bdata = replace(data, A=ab, B=bb, C=cb)
    m = sys.m
    basis = sym_basis(m)
    nh = len(basis)
    n = nh + 2
    d = m + 3

    g0 = r_matrix(bdata, 0.0, 0.0)
    coefs = np.zeros((n, d, d))
    for k, (_, _, e) in enumerate(basis):
        coefs[k] = -l_matrix(ab, bb, e)
    coefs[nh] = r_matrix(bdata, 1.0, 0.0) - g0    # eps column
    coefs[nh + 1] = r_matrix(bdata, 0.0, 1.0) - g0  # nu column

    coef_h = np.zeros((n, m, m))
    for k, (_, _, e) in enumerate(basis):
        coef_h[k] = e
    coef_eps = np.zeros((n, 1, 1))
    coef_eps[nh, 0, 0] = 1.0
    coef_nu = np.zeros((n, 1, 1))
    coef_nu[nh + 1, 0, 0] = 1.0

    constraints = [
        AffineMatrixConstraint("stability", g0, coefs, strict=True),
        AffineMatrixConstraint("H_pd", np.zeros((m, m)), coef_h, strict=True),
        AffineMatrixConstraint("eps_pos", np.zeros((1, 1)), coef_eps, strict=True),
        AffineMatrixConstraint("nu_pos", np.zeros((1, 1)), coef_nu, strict=True),
    ]
    names = [f"H[{i},{j}]" for i, j, _ in basis] + ["eps", "nu"]
    lo = np.concatenate([np.full(nh, -H_BOX_DEFAULT), [0.0, 0.0]])
    hi = np.concatenate([np.full(nh, H_BOX_DEFAULT),
                         [EPS_BOX_FACTOR * ramp.sigma_star / ramp.T,
                          NU_BOX_FACTOR * ramp.sigma_star]])
    problem = LmiProblem(variables=names, constraints=constraints,
                         box_lo=lo, box_hi=hi,
                         meta={"kind": "theorem2", "balance": s, "m": m,
                               "data": data, "data_balanced": bdata})
    problem.start = _theorem2_pilot(problem, ab, nh)
    return problem


def _constraint_rel_margins(constraints, z):
    out = []
    for con in constraints:
        g = con.value(z)
        nrm = max(np.linalg.norm(g), 1e-300)
        w, _, _ = _jacobi(g)
        out.append(w[0] / nrm)
    return np.array(out)


def _jacobi(g):
    from .kernels import jacobi_eig_kernel
    s = 0.5 * (g + g.T)
    return jacobi_eig_kernel(np.ascontiguousarray(s), 1e-14, 60)


def _theorem2_pilot(problem: LmiProblem, ab, nh):
    """Coarse grid start: Lyapunov H direction x magnitude, eps/nu log grids."""
    m = ab.shape[0]
    try:
        hd = lyapunov(ab, np.eye(m))
    except numerics.SingularMatrix:
        hd = np.eye(m)
    hd = hd / max(np.linalg.norm(hd), 1e-300)
    hd_packed = pack_symmetric(hd)
    hi_eps = problem.box_hi[nh]
    hi_nu = problem.box_hi[nh + 1]
    best, best_z = -np.inf, None
    for eta in 10.0 ** np.linspace(-6.0, 2.0, 17):
        for ev in 10.0 ** np.linspace(-2.0, 1.0, 7):
            for nv in 10.0 ** np.linspace(-2.0, 1.0, 7):
                z = np.zeros(problem.n_vars)
                z[:nh] = eta * hd_packed
                z[nh] = min(ev, 0.5 * hi_eps)
                z[nh + 1] = min(nv, 0.5 * hi_nu)
                mm = _constraint_rel_margins(problem.constraints, z).min()
                if mm > best:
                    best, best_z = mm, z
    return best_z


# ---------------------------------------------------------------------------
# max-margin feasibility solver

def _ruiz_scale(g0, coefs, r, sweeps=6):
    w = np.abs(g0) + np.tensordot(r, np.abs(coefs), axes=1)
    d = np.ones(g0.shape[0])
    for _ in range(sweeps):
        rn = np.sqrt(np.maximum(w.max(axis=1), 1e-300))
        w = w / rn[:, None] / rn[None, :]
        d /= rn
    return d


class _ScaledProblem:
    """Equilibrated, norm-scaled copy of an LmiProblem in variables w = z/r.

    Each constraint gets a diagonal congruence (Ruiz-style, driven by the
    magnitude structure at the variable scales r) and a scalar normalisation;
    both preserve feasibility exactly and condition the barrier Newton steps.
    """

    def __init__(self, problem: LmiProblem, r):
        self.r = r
        self.g0 = []
        self.coefs = []
        for con in problem.constraints:
            d = _ruiz_scale(con.constant, con.coefficients, r)
            g0 = con.constant * d[:, None] * d[None, :]
            cf = con.coefficients * d[None, :, None] * d[None, None, :]
            s = max(np.linalg.norm(g0),
                    max(r[i] * np.linalg.norm(cf[i]) for i in range(len(r))),
                    1e-300)
            self.g0.append(g0 / s)
            self.coefs.append(cf * (r[:, None, None] / s))
        self.lo = problem.box_lo / r
        self.hi = problem.box_hi / r

    def values(self, w):
        return [g0 + np.tensordot(w, cf, axes=1)
                for g0, cf in zip(self.g0, self.coefs)]

    def min_margin(self, w):
        best = np.inf
        for g in self.values(w):
            ev, _, _ = _jacobi(g)
            best = min(best, ev[0])
        return best


def _barrier_maxmargin(sp: _ScaledProblem, w0, budget, t_cap=10.0,
                       exit_margin=None, mu_max=1e10):
    """Maximise t s.t. G_c(w) - t I > 0 plus box bounds; damped Newton on the
    log-det barrier, increasing the linear weight mu along the central path.

    Returns (w_best, t_best, newton_iterations).  t at any interior iterate
    is a certified lower bound on the true margin at that iterate.
    """
    nv = len(w0)
    finite_lo = np.isfinite(sp.lo)
    finite_hi = np.isfinite(sp.hi)
    eyes = [np.eye(g.shape[0]) for g in sp.g0]

    w = np.clip(w0, np.where(finite_lo, sp.lo + 1e-12, w0),
                np.where(finite_hi, sp.hi - 1e-12, w0))
    m0 = sp.min_margin(w)
    t = m0 - 0.1 * max(1.0, abs(m0))
    best_t, best_w = m0, w.copy()
    x = np.concatenate([w, [t]])

    def in_domain(x):
        wv, tv = x[:nv], x[nv]
        if tv >= t_cap:
            return False
        if np.any(finite_lo & (wv <= sp.lo)) or np.any(finite_hi & (wv >= sp.hi)):
            return False
        for g, eye in zip(sp.values(wv), eyes):
            _, ok = cholesky_kernel(np.ascontiguousarray(g - tv * eye))
            if not ok:
                return False
        return True

    used = 0
    mu = 1.0
    while mu <= mu_max and used < budget:
        for _ in range(60):
            if used >= budget:
                break
            used += 1
            wv, tv = x[:nv], x[nv]
            grad = np.zeros(nv + 1)
            hess = np.zeros((nv + 1, nv + 1))
            grad[nv] = -mu
            ok_all = True
            for g, cf, eye in zip(sp.values(wv), [c for c in sp.coefs], eyes):
                gt = g - tv * eye
                gi, ok = solve_kernel(np.ascontiguousarray(gt), eye, 1e-300)
                if not ok:
                    ok_all = False
                    break
                s = np.einsum('ab,ibc->iac', gi, cf)
                grad[:nv] -= np.einsum('iaa->i', s)
                grad[nv] += np.trace(gi)
                hess[:nv, :nv] += np.einsum('iab,jba->ij', s, s)
                mix = -np.einsum('iab,ba->i', s, gi)
                hess[:nv, nv] += mix
                hess[nv, :nv] += mix
                hess[nv, nv] += np.einsum('ab,ba->', gi, gi)
            if not ok_all:
                break
            for i in range(nv):
                if finite_lo[i]:
                    d = wv[i] - sp.lo[i]
                    grad[i] -= 1.0 / d
                    hess[i, i] += 1.0 / d ** 2
                if finite_hi[i]:
                    d = sp.hi[i] - wv[i]
                    grad[i] += 1.0 / d
                    hess[i, i] += 1.0 / d ** 2
            d = t_cap - tv
            grad[nv] += 1.0 / d
            hess[nv, nv] += 1.0 / d ** 2

            step = None
            lam = 0.0
            for _ in range(12):
                try:
                    step = numerics.solve(hess + lam * np.eye(nv + 1), -grad)
                    break
                except numerics.SingularMatrix:
                    lam = 1e-10 if lam == 0.0 else lam * 100.0
            if step is None:
                break
            dec = float(-grad @ step)
            if dec < 1e-10:
                break
            alpha = 1.0
            for _ in range(60):
                if in_domain(x + alpha * step):
                    break
                alpha *= 0.5
            else:
                alpha = 0.0
            if alpha == 0.0:
                break
            x = x + alpha * step
            if x[nv] > best_t:
                best_t = x[nv]
                best_w = x[:nv].copy()
                if exit_margin is not None and best_t > exit_margin:
                    return best_w, best_t, used
        mu *= 10.0
    # the actual margin at the best iterate can only exceed the bound t
    m_final = sp.min_margin(best_w)
    if m_final > best_t:
        best_t = m_final
    return best_w, best_t, used


def _verify_margins(constraints, z, margin_rel):
    """Margins must clear margin_rel times the constraint scale.

    The scale is the Frobenius norm of the constant block (the constraint's
    intrinsic data scale, which bounds the eigenvalue noise floor); for
    homogeneous constraints (zero constant) the realized value norm is used.
    """
    margins, norms = {}, {}
    ok = True
    for con in constraints:
        g = con.value(z)
        nrm = float(np.linalg.norm(g))
        scale = float(np.linalg.norm(con.constant))
        if scale == 0.0:
            scale = nrm
        w, _, conv = _jacobi(g)
        margins[con.name] = float(w[0])
        norms[con.name] = nrm
        if not conv or not w[0] > margin_rel * max(scale, 1e-300):
            ok = False
    return ok, margins, norms


def solve_feasibility(problem: LmiProblem, seed=0, restarts=20,
                      iterations=5000, margin_rel=MARGIN_REL_DEFAULT) -> LmiCertificate:
    """Max-margin feasibility: returns a certificate with verified margins.

    Each start runs the barrier on the equilibrated problem; the first point
    passing the margin rule wins.  Infeasibility is never proven:
    feasible=False means the rule was not met within the budget.
    """
    rng = np.random.default_rng(seed)
    n = problem.n_vars

    starts = []
    if problem.start is not None:
        starts.append(np.asarray(problem.start, float))
        for f in (0.3, 3.0):
            starts.append(starts[0] * f)
    scale_guess = (np.maximum(np.abs(starts[0]), 1e-6 * (np.abs(starts[0]).max() or 1.0))
                   if starts else np.ones(n))
    while len(starts) < max(restarts, 1):
        starts.append(scale_guess * rng.normal(scale=1.0, size=n))

    def done(z):
        return _verify_margins(problem.constraints, z, margin_rel)[0]

    best = None  # (t, z, restart_index)
    used_total = 0
    for k, z0 in enumerate(starts[:max(restarts, 1)]):
        z = np.asarray(z0, float)
        if done(z):
            best = (np.inf, z, k)
            break
        r = np.maximum(np.abs(z), 1e-6 * max(np.abs(z).max(), 1e-300))
        sp = _ScaledProblem(problem, r)
        w, t, used = _barrier_maxmargin(sp, z / r, budget=iterations)
        used_total += used
        z = w * r
        if best is None or t > best[0]:
            best = (t, z, k)
        if t > 0.0 and done(z):
            best = (t, z, k)
            break
        if best[0] > -1e-12 and k >= 2:
            break  # margin pinned at zero: boundary case, more starts will not help

    t_best, z_best, k_last = best
    ok, margins, norms = _verify_margins(problem.constraints, z_best, margin_rel)
    values = {name: float(v) for name, v in zip(problem.variables, z_best)}
    notes = [] if ok else ["infeasible within budget"]
    return LmiCertificate(feasible=ok, values=values, margins=margins,
                          margin_norms=norms, iterations=used_total,
                          restarts_used=k_last + 1, seed=seed, notes=notes)


# ---------------------------------------------------------------------------
# original-coordinate verification and the theorem-level drivers

def _unbalance_values(problem: LmiProblem, cert: LmiCertificate):
    """Map solved variables from balanced to original state coordinates."""
    s = problem.meta.get("balance")
    m = problem.meta.get("m")
    kind = problem.meta.get("kind")
    if s is None or np.allclose(s, 1.0):
        return dict(cert.values)
    d = np.diag(s)
    d_inv = np.diag(1.0 / s)
    vals = dict(cert.values)
    if kind == "theorem1":
        pb = unpack_symmetric(
            np.array([cert.values[f"P[{i},{j}]"] for i, j, _ in sym_basis(m)]), m)
        p = d @ pb @ d
        for i, j, _ in sym_basis(m):
            vals[f"P[{i},{j}]"] = float(p[i, j])
    elif kind == "theorem2":
        hb = unpack_symmetric(
            np.array([cert.values[f"H[{i},{j}]"] for i, j, _ in sym_basis(m)]), m)
        h = d_inv @ hb @ d_inv
        for i, j, _ in sym_basis(m):
            vals[f"H[{i},{j}]"] = float(h[i, j])
    return vals


def _reverify(problem_orig: LmiProblem, values, margin_rel):
    z = np.array([values[name] for name in problem_orig.variables])
    return _verify_margins(problem_orig.constraints, z, margin_rel)


def certify_theorem1(sys: LtiSystem, ramp: RampParams, eps, seed=0,
                     restarts=20, iterations=5000,
                     margin_rel=MARGIN_REL_DEFAULT) -> LmiCertificate:
    """Solve the fixed-eps existence LMI and verify in original coordinates."""
    problem = build_theorem1(sys, ramp, eps, balance=True)
    cert = solve_feasibility(problem, seed=seed, restarts=restarts,
                             iterations=iterations, margin_rel=margin_rel)
    values = _unbalance_values(problem, cert)
    values["eps"] = float(eps)
    orig = build_theorem1(sys, ramp, eps, balance=False)
    orig_vars = [v for v in orig.variables]
    ok, margins, norms = _verify_margins(
        orig.constraints,
        np.array([values[name] for name in orig_vars]), margin_rel)
    cert.values = values
    cert.margins = margins
    cert.margin_norms = norms
    cert.feasible = cert.feasible and ok
    if not ok and "infeasible within budget" not in cert.notes:
        cert.notes.append("failed original-coordinate verification")
    return cert


def eps_grid(sys: LtiSystem, points=64):
    """Logarithmic plus uniform eps grid inside (0, hurwitz_margin(A))."""
    eps_max = numerics.hurwitz_margin(sys.A)
    half = max(points // 2, 1)
    grid = np.unique(np.concatenate([
        np.geomspace(eps_max * 1e-4, eps_max * 0.999, half),
        np.linspace(eps_max / (half + 1), eps_max * 0.999, half)]))
    return grid, eps_max


def theorem1_sweep(sys: LtiSystem, ramp: RampParams, points=64, seed=0,
                   restarts=20, iterations=5000,
                   margin_rel=MARGIN_REL_DEFAULT):
    """Sweep eps and solve each fixed-eps LMI; first verified certificate wins.

    Returns (feasible, best_eps, certificate or None).
    """
    grid, _ = eps_grid(sys, points)
    gamma = gamma_value(sys, ramp)
    eye = np.eye(sys.m)
    v = sys.C @ sys.A
    for eps in grid:
        # Any feasible P dominates the Lyapunov solution P*(eps) in the Loewner
        # order, so CAP*A^TC^T >= gamma^2 proves this eps infeasible -- skip it.
        try:
            p_star = lyapunov((sys.A + eps * eye).T,
                              np.outer(sys.B, sys.B) / (2.0 * eps))
            if float(v @ p_star @ v) >= gamma ** 2 * (1.0 - 1e-12):
                continue
        except numerics.SingularMatrix:
            pass
        cert = certify_theorem1(sys, ramp, eps, seed=seed, restarts=restarts,
                                iterations=iterations, margin_rel=margin_rel)
        if cert.feasible:
            return True, float(eps), cert
    return False, None, None


def certify_theorem2(sys: LtiSystem, ramp: RampParams, l1, seed=0,
                     restarts=20, iterations=5000,
                     margin_rel=MARGIN_REL_DEFAULT) -> LmiCertificate:
    """Solve the stability LMI and verify in original coordinates."""
    problem = build_theorem2(sys, ramp, l1, balance=True)
    cert = solve_feasibility(problem, seed=seed, restarts=restarts,
                             iterations=iterations, margin_rel=margin_rel)
    values = _unbalance_values(problem, cert)
    orig = build_theorem2(sys, ramp, l1, balance=False)
    ok, margins, norms = _verify_margins(
        orig.constraints,
        np.array([values[name] for name in orig.variables]), margin_rel)
    cert.values = values
    cert.margins = margins
    cert.margin_norms = norms
    cert.feasible = cert.feasible and ok
    if not ok and "infeasible within budget" not in cert.notes:
        cert.notes.append("failed original-coordinate verification")
    return cert


# ---------------------------------------------------------------------------
# sigma_star threshold search

@dataclass
class SweepResult:
    target: str
    threshold: float
    bracket: Tuple[float, float]
    trials: List[Tuple[float, bool]]


def min_sigma_star(p, c, ramp: RampParams, target, lo, hi,
                   resolution=0.05, seed=0, restarts=20, iterations=5000,
                   l1_source=L1_SOURCE_OPEN_LOOP,
                   duty_grid=(0.1, 0.3, 0.5, 0.7, 0.9),
                   l1_fixed=None, eps_points=64) -> SweepResult:
    """Bisect sigma_star for the requested feasibility target.

    target "existence": Eq.-25 inequality plus the eps-swept P-LMI.
    target "stability": an unsaturated mode exists and the (H, eps, nu) LMI
    is feasible, with L1 recomputed per trial unless l1_fixed is given.
    """
    if target not in (TARGET_EXISTENCE, TARGET_STABILITY):
        raise ValueError(f"unknown sweep target {target!r}")
    if not lo < hi:
        raise ValueError("empty sigma_star interval")
    sysb = shift(assemble(p, c))
    trials = []

    def feasible_at(sig):
        ramp_s = replace(ramp, sigma_star=float(sig))
        if target == TARGET_EXISTENCE:
            report_gamma_ok = ramp_s.sigma1 < sysb.psi
            w = numerics.solve(sysb.A, sysb.B)
            upper = ramp_s.sigma1 + ramp_s.sigma_star + float(sysb.C @ w)
            if not (report_gamma_ok and sysb.psi < upper):
                return False
            feas, _, _ = theorem1_sweep(sysb, ramp_s, points=eps_points,
                                        seed=seed, restarts=restarts,
                                        iterations=iterations)
            return feas
        report = find_modes(sysb, ramp_s)
        if not report.modes:
            return False
        if l1_fixed is not None:
            l1 = float(l1_fixed)
        elif l1_source == L1_SOURCE_OPEN_LOOP:
            table, worst = l1_open_loop_sweep(p, c, ramp_s, duty_grid)
            l1 = worst / ramp_s.T
        else:
            l1 = min(md.L1 for md in report.modes)
        try:
            cert = certify_theorem2(sysb, ramp_s, l1, seed=seed,
                                    restarts=restarts, iterations=iterations)
        except SectorViolated:
            return False
        return cert.feasible

    f_lo = feasible_at(lo)
    trials.append((float(lo), f_lo))
    f_hi = feasible_at(hi)
    trials.append((float(hi), f_hi))
    if f_lo or not f_hi:
        raise NoBracket(
            f"feasibility at endpoints is ({f_lo}, {f_hi}); need (False, True)")
    a, b = float(lo), float(hi)
    while b - a > resolution:
        mid = 0.5 * (a + b)
        f_mid = feasible_at(mid)
        trials.append((mid, f_mid))
        if f_mid:
            b = mid
        else:
            a = mid
    return SweepResult(target=target, threshold=0.5 * (a + b),
                       bracket=(a, b), trials=trials)


# ---------------------------------------------------------------------------
# Lemma-1 equivalence checker

def check_lemma1_equivalence(a, b, h, eps, samples=200, seed=0,
                             tol_rel=1e-9):
    """Compare the eigenvalue form and the quadratic-sampling form of the
    dissipation inequality; returns True when the two verdicts agree."""
    a = np.asarray(a, float)
    b = np.asarray(b, float).reshape(-1)
    h = np.asarray(h, float)
    eps = float(eps)
    m = a.shape[0]
    rng = np.random.default_rng(seed)

    g = h @ b
    m33 = h @ a + a.T @ h + 2.0 * eps * h + np.outer(g, g) / (2.0 * eps)
    scale33 = max(np.linalg.norm(m33), 1e-300)
    w33, _ = numerics.sym_eig(0.5 * (m33 + m33.T)).eigenvalues, None
    verdict_33 = w33[-1] <= tol_rel * scale33

    # quadratic form x'H(Ax+Bf) + eps(x'Hx - 1) = x'Wx + f g'x - eps
    w_mat = 0.5 * (h @ a + a.T @ h) + eps * h
    scale_w = max(np.linalg.norm(w_mat), 1e-300)
    ew = numerics.sym_eig(w_mat).eigenvalues
    verdict_34 = True
    if ew[-1] > tol_rel * scale_w:
        verdict_34 = False  # quadratic part indefinite: supremum is +inf
    else:
        # analytic worst case over x at |f| = 1 (regularised when W is singular)
        reg = w_mat - max(tol_rel * scale_w, 1e-30) * np.eye(m)
        try:
            x_star = numerics.solve(reg, -0.5 * g)
            val = float(x_star @ w_mat @ x_star + g @ x_star - eps)
            if val > tol_rel * max(1.0, abs(eps)):
                verdict_34 = False
        except numerics.SingularMatrix:
            pass
        if verdict_34:
            scale_x = 1.0 / max(np.sqrt(scale_w), 1e-300)
            for _ in range(samples):
                x = rng.normal(size=m) * scale_x * 10.0 ** rng.uniform(-1, 3)
                f = rng.uniform(-1.0, 1.0)
                if rng.uniform() < 0.5:
                    f = np.sign(f) if f != 0.0 else 1.0
                val = float(x @ w_mat @ x + f * (g @ x) - eps)
                if val > tol_rel * max(1.0, abs(eps)):
                    verdict_34 = False
                    break
    return bool(verdict_33) == bool(verdict_34)
