"""Unsaturated T-periodic operating modes of the shifted closed loop.

A candidate pulse width tau solves sigma_hat(tau, tau) = Phi(tau); it is a
valid operating mode when additionally sigma_hat(tau, t) > Phi(t) for all
t in [0, tau), so the latched modulator switches at tau and not earlier.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from . import numerics
from .kernels import affine_orbit
from .model import LtiSystem, RampParams, PROPORTIONAL, assemble, shift

N_SCAN_DEFAULT = 2048
N_CHECK_DEFAULT = 2048
ROOT_TOL_REL = 1e-10       # |g(tau)| <= ROOT_TOL_REL * sigma_star at a root
MARGIN_TOL_REL = 1e-9      # validity margin must exceed -MARGIN_TOL_REL * sigma_star
GRAZE_WARN_REL = 1e-6      # margins below this (relative) get flagged
L1_GRID = 4096

L1_SOURCE_ANALYTIC = "analytic"
L1_SOURCE_OPEN_LOOP = "open_loop"


class _Propagator:
    """Caches the matrix-exponential machinery for one (system, ramp) pair."""

    def __init__(self, sys: LtiSystem, ramp: RampParams):
        self.sys = sys
        self.ramp = ramp
        self.w = numerics.solve(sys.A, sys.B)          # A^{-1} B
        e_neg = numerics.matexp(-sys.A * ramp.T)
        eye = np.eye(sys.m)
        self.K = numerics.solve(eye - e_neg, eye)      # (I - e^{-AT})^{-1}
        self.r = (self.K - eye) @ self.w
        self._xhat_cache = {}

    def xhat(self, tau):
        """Initial state of the would-be periodic solution with pulse width tau."""
        key = float(tau)
        if key not in self._xhat_cache:
            e_neg = numerics.matexp(-self.sys.A * key)
            self._xhat_cache[key] = -self.K @ ((np.eye(self.sys.m) - e_neg) @ self.w)
        return self._xhat_cache[key]

    def sigma_hat(self, tau, t):
        e_t = numerics.matexp(self.sys.A * t)
        forced = (e_t - np.eye(self.sys.m)) @ self.w
        return float(self.sys.C @ (e_t @ self.xhat(tau)) + self.sys.psi
                     + self.sys.C @ forced)

    def g(self, tau):
        """sigma_hat(tau, tau) - Phi(tau), via the one-exponential reduction."""
        e_t = numerics.matexp(self.sys.A * tau)
        val = self.sys.psi + float(self.sys.C @ (self.r - e_t @ self.r))
        return val - float(self.ramp.phi(tau))


def sigma_hat(sys: LtiSystem, ramp: RampParams, tau, t):
    """Running modulator input of the pulse-width-tau periodic candidate."""
    return _Propagator(sys, ramp).sigma_hat(tau, t)


@dataclass
class PeriodicMode:
    """A verified unsaturated T-periodic solution."""

    tau0: float
    x_hat: np.ndarray            # shifted state at the period start
    duty: float
    L1: float                    # bound on |d sigma0 / dt|, V/s
    l1_source: str
    sigma0: Callable = field(repr=False, default=None)
    x0: Callable = field(repr=False, default=None)           # unshifted state
    x0_shifted: Callable = field(repr=False, default=None)
    mean_state: np.ndarray = field(repr=False, default=None)  # unshifted, period average
    residual: float = 0.0        # |g(tau0)|
    min_margin: float = np.inf   # min of sigma_hat - Phi over the check grid

    @property
    def mean_output(self):
        """Period-averaged capacitor voltage (state index 1)."""
        return float(self.mean_state[1])


@dataclass
class ExistenceReport:
    ineq25_holds: bool
    ineq25_bounds: Tuple[float, float, float]  # (sigma1, psi, sigma1+sigma*+CA^{-1}B)
    modes: List[PeriodicMode]
    rejected_roots: List[Tuple[float, float]]  # (tau, violating t)
    warnings: List[str]


def _check_root(prop: _Propagator, tau, n_check):
    """Validity margin of a root: min over [0, tau) of sigma_hat - Phi."""
    sys, ramp = prop.sys, prop.ramp
    if n_check < 1 or tau <= 0.0:
        return np.inf, 0.0
    dt = tau / n_check
    e_dt = numerics.matexp(sys.A * dt)
    z0 = prop.xhat(tau) + prop.w
    orbit = affine_orbit(e_dt, np.zeros(sys.m), z0, n_check - 1)
    sig = orbit @ sys.C + (sys.psi - float(sys.C @ prop.w))
    ts = np.arange(n_check) * dt
    margins = sig - np.asarray(ramp.phi(ts))
    k = int(np.argmin(margins))
    return float(margins[k]), float(ts[k])


def _bisect_root(prop: _Propagator, lo, hi, g_lo, tol_abs):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g_mid = prop.g(mid)
        if abs(g_mid) <= tol_abs or (hi - lo) <= 4.0 * np.finfo(float).eps * hi:
            return mid, g_mid
        if (g_lo > 0.0) == (g_mid > 0.0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return 0.5 * (lo + hi), prop.g(0.5 * (lo + hi))


def find_modes(sys: LtiSystem, ramp: RampParams,
               n_scan=N_SCAN_DEFAULT, n_check=N_CHECK_DEFAULT,
               shift_vec=None) -> ExistenceReport:
    """Locate and verify all unsaturated T-periodic modes.

    sys must already be shifted (q = 0); shift_vec is the A^{-1} q of the
    original system so reconstructed modes can report unshifted states.
    """
    prop = _Propagator(sys, ramp)
    ca_inv_b = float(sys.C @ prop.w)
    upper = ramp.sigma1 + ramp.sigma_star + ca_inv_b
    ineq25 = ramp.sigma1 < sys.psi < upper

    T = ramp.T
    dt = T / n_scan
    e_dt = numerics.matexp(sys.A * dt)
    orbit = affine_orbit(e_dt, np.zeros(sys.m), prop.r, n_scan)
    taus = np.arange(n_scan + 1) * dt
    g = (sys.psi + float(sys.C @ prop.r)) - orbit @ sys.C \
        - np.asarray(ramp.phi(taus))

    tol_abs = ROOT_TOL_REL * ramp.sigma_star
    margin_floor = -MARGIN_TOL_REL * ramp.sigma_star
    modes, rejected, warnings = [], [], []
    for k in range(n_scan):
        if g[k] == 0.0 and taus[k] == 0.0:
            continue
        if not (g[k] * g[k + 1] <= 0.0 and (g[k] != 0.0 or g[k + 1] != 0.0)):
            continue
        tau_root, g_root = _bisect_root(prop, taus[k], taus[k + 1], g[k], tol_abs)
        if not (0.0 < tau_root < T):
            continue
        margin, t_viol = _check_root(prop, tau_root, n_check)
        if margin <= margin_floor:
            rejected.append((float(tau_root), t_viol))
            continue
        if margin < GRAZE_WARN_REL * ramp.sigma_star:
            warnings.append(
                f"mode at tau={tau_root:.6e} s grazes the ramp "
                f"(margin {margin:.3e} V at t={t_viol:.6e} s)")
        mode = reconstruct(sys, ramp, tau_root, shift_vec=shift_vec)
        mode.residual = abs(g_root)
        mode.min_margin = margin
        modes.append(mode)
    modes.sort(key=lambda md: md.tau0)
    return ExistenceReport(ineq25_holds=bool(ineq25),
                           ineq25_bounds=(ramp.sigma1, sys.psi, upper),
                           modes=modes, rejected_roots=rejected, warnings=warnings)


def reconstruct(sys: LtiSystem, ramp: RampParams, tau0,
                shift_vec=None) -> PeriodicMode:
    """Build samplers and the derivative bound for a root of the mode equation.

    shift_vec is A^{-1} q of the pre-shift system (zero when the system was
    already forcing-free); the unshifted sampler subtracts it.
    """
    prop = _Propagator(sys, ramp)
    T = ramp.T
    tau0 = float(tau0)
    if not (0.0 < tau0 < T):
        raise ValueError(f"pulse width {tau0} outside (0, T)")
    m = sys.m
    w = prop.w
    x_hat = prop.xhat(tau0)
    shift_vec = np.zeros(m) if shift_vec is None else np.asarray(shift_vec, float)

    e_tau = numerics.matexp(sys.A * tau0)
    x_tau = e_tau @ (x_hat + w) - w
    e_rest = numerics.matexp(sys.A * (T - tau0))
    x_period = e_rest @ x_tau
    period_err = np.linalg.norm(x_period - x_hat)
    if period_err > 1e-9 * max(np.linalg.norm(x_hat), 1.0):
        raise ValueError(
            f"periodicity violated: |x(T) - x(0)| = {period_err:.3e}")

    def x0_shifted(t):
        t = float(t) % T
        if t <= tau0:
            e_t = numerics.matexp(sys.A * t)
            return e_t @ (x_hat + w) - w
        return numerics.matexp(sys.A * (t - tau0)) @ x_tau

    def x0(t):
        return x0_shifted(t) - shift_vec

    def sigma0(t):
        return float(sys.C @ x0_shifted(t) + sys.psi)

    # consistency of the defining equation and periodicity
    for lhs, rhs, what in (
            (sigma0(tau0), float(ramp.phi(tau0)), "sigma0(tau0) = Phi(tau0)"),
            (sigma0(0.0), sigma0(T), "sigma0(0) = sigma0(T)")):
        if abs(lhs - rhs) > 1e-9 * ramp.sigma_star:
            raise ValueError(f"mode invariant failed: {what} ({lhs} vs {rhs})")

    # exact period average of the state
    eye = np.eye(m)
    j_tau = numerics.solve(sys.A, e_tau - eye)
    j_rest = numerics.solve(sys.A, e_rest - eye)
    integral = j_tau @ (x_hat + w) - tau0 * w + j_rest @ x_tau
    mean_state = integral / T - shift_vec

    mode = PeriodicMode(tau0=tau0, x_hat=x_hat, duty=tau0 / T,
                        L1=0.0, l1_source=L1_SOURCE_ANALYTIC,
                        sigma0=sigma0, x0=x0, x0_shifted=x0_shifted,
                        mean_state=mean_state)
    mode.L1 = l1_analytic(mode, sys, ramp)
    return mode


def _golden_max(fn, a, b, tol):
    """Golden-section maximisation of fn on [a, b]."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    return max(fc, fd)


def _sigma_dot_max(sys: LtiSystem, ramp: RampParams, x_start, tau, n_grid=L1_GRID):
    """max |d sigma/dt| over one period of the pulse response from x_start.

    x_start is the shifted state at the period begin; the pulse is on for
    [0, tau).  Both one-sided derivative values at the switching instants are
    included, and the grid maximum is refined by golden-section search.
    """
    T = ramp.T
    w = numerics.solve(sys.A, sys.B)
    ca = sys.C @ sys.A
    cb = float(sys.C @ sys.B)

    n_on = max(int(round(n_grid * tau / T)), 2)
    n_off = max(n_grid - n_on, 2)
    best = 0.0
    segments = []
    if tau > 0.0:
        dt_on = tau / n_on
        e_on = numerics.matexp(sys.A * dt_on)
        orb_on = affine_orbit(e_on, (e_on - np.eye(sys.m)) @ w, x_start, n_on)
        vals_on = np.abs(orb_on @ ca + cb)
        segments.append((0.0, tau, orb_on, vals_on, 1.0, dt_on))
        x_tau = orb_on[-1]
    else:
        x_tau = x_start.copy()
    if tau < T:
        dt_off = (T - tau) / n_off
        e_off = numerics.matexp(sys.A * dt_off)
        orb_off = affine_orbit(e_off, np.zeros(sys.m), x_tau, n_off)
        vals_off = np.abs(orb_off @ ca)
        segments.append((tau, T, orb_off, vals_off, 0.0, dt_off))

    def deriv_abs(t, f, seg_start, x_seg_start):
        e_t = numerics.matexp(sys.A * (t - seg_start))
        if f == 1.0:
            x = e_t @ (x_seg_start + w) - w
        else:
            x = e_t @ x_seg_start
        return abs(float(ca @ x) + cb * f)

    for seg_start, seg_end, orb, vals, f, dt in segments:
        best = max(best, float(vals.max()))
        k = int(np.argmax(vals))
        a = seg_start + max(k - 1, 0) * dt
        b = seg_start + min(k + 1, len(vals) - 1) * dt
        if b > a:
            x0seg = orb[0]
            refined = _golden_max(
                lambda t: deriv_abs(t, f, seg_start, x0seg), a, b,
                tol=1e-6 * (b - a) + 1e-18)
            best = max(best, refined)
    return best


def l1_analytic(mode: PeriodicMode, sys: LtiSystem, ramp: RampParams,
                n_grid=L1_GRID):
    """Sharp derivative bound max |d sigma0/dt| for a computed mode."""
    return _sigma_dot_max(sys, ramp, mode.x_hat, mode.tau0, n_grid)


def l1_open_loop_sweep(p, c, ramp: RampParams, duty_grid):
    """Fixed-duty pulse-train response of the loop's linear part.

    For each duty the exact periodic steady state is used directly (no
    transient).  Returns (list of T*L1 per duty, worst-case T*L1).
    """
    sysb = shift(assemble(p, c))
    prop = _Propagator(sysb, ramp)
    table = []
    for duty in duty_grid:
        if not 0.0 < duty < 1.0:
            raise ValueError(f"duty {duty} outside (0, 1)")
        tau = duty * ramp.T
        l1 = _sigma_dot_max(sysb, ramp, prop.xhat(tau), tau)
        table.append(ramp.T * l1)
    return table, max(table)


def approx_output(p, c, ramp: RampParams):
    """Ripple-free approximation of the mean output voltage (proportional loop)."""
    if c.variant != PROPORTIONAL:
        raise ValueError("approximate output formula applies to proportional control only")
    return p.Vs * (c.a * c.Vref - ramp.sigma1) / (ramp.sigma_star + c.a * p.Vs)
