"""Event-exact simulation of the latched natural-sampling PWM loop.

State propagation uses the matrix exponential on each constant-input branch,
so the only error sources are the switching-time bisection tolerance and the
exponential itself; the recorded sample density never feeds back into the
trajectory.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import numerics
from .kernels import affine_orbit
from .model import LtiSystem, RampParams
from .periodic import PeriodicMode

log = logging.getLogger(__name__)

EVENT_GRID = 1024
V_FLOOR = 1e-14  # |v_n| below this counts as "on the periodic pulse width"


@dataclass
class SimConfig:
    x0: np.ndarray
    periods: int = 100
    samples_per_period: int = 256
    event_tol_rel: float = 1e-12   # bisection width target, relative to T

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if self.periods < 1:
            raise ValueError("periods must be >= 1")
        if self.samples_per_period < 16:
            raise ValueError("samples_per_period must be >= 16")


@dataclass
class SimTrace:
    times: np.ndarray          # (periods * S,)
    states: np.ndarray         # (periods * S, m)
    sigma: np.ndarray          # (periods * S,)
    f: np.ndarray              # (periods * S,) in {0, 1}
    tau: np.ndarray            # (periods,) pulse widths
    period_index: np.ndarray   # (periods * S,)
    period_starts: np.ndarray  # (periods + 1, m) states at nT
    # mode-relative fields, populated when a mode is supplied
    v: Optional[np.ndarray] = None           # (periods,) (tau_n - tau0)/T
    u: Optional[np.ndarray] = None           # (periods * S,) averaging error
    deviations: Optional[np.ndarray] = None  # (periods + 1,) |x(nT) - x0(0)|
    warnings: List[str] = field(default_factory=list)


class _Stepper:
    """Per-period propagation helpers for one (system, ramp, grid) setup."""

    def __init__(self, sys: LtiSystem, ramp: RampParams, samples, event_tol):
        self.sys = sys
        self.ramp = ramp
        self.samples = samples
        self.event_tol = event_tol
        m = sys.m
        self.u_on = sys.B + sys.q
        self.u_off = sys.q.copy()
        self.w_on = numerics.solve(sys.A, self.u_on)   # A^{-1}(B + q)
        self.w_off = numerics.solve(sys.A, sys.q) if np.any(sys.q) else np.zeros(m)
        dt_e = ramp.T / EVENT_GRID
        self.dt_event = dt_e
        e = numerics.matexp(sys.A * dt_e)
        self.e_event = e
        self.we_on = (e - np.eye(m)) @ self.w_on
        dt_s = ramp.T / samples
        self.dt_sample = dt_s
        es = numerics.matexp(sys.A * dt_s)
        self.e_sample = es
        self.ws_on = (es - np.eye(m)) @ self.w_on
        self.ws_off = (es - np.eye(m)) @ self.w_off

    def propagate(self, x, dt, on):
        """Exact state advance over dt with the switch on or off."""
        e = numerics.matexp(self.sys.A * dt)
        w = self.w_on if on else self.w_off
        return e @ (x + w) - w

    def sigma_on(self, x_start, t):
        """sigma(nT + t) along the switch-on branch from the period start."""
        return float(self.sys.C @ self.propagate(x_start, t, True) + self.sys.psi)


def switching_time(sys: LtiSystem, ramp: RampParams, x_start,
                   event_tol_rel=1e-12, _stepper=None):
    """Pulse width for the period starting at state x_start.

    Modulation law: tau = 0 when sigma(nT) <= sigma1; tau = T when sigma
    stays above the ramp on the whole period (evaluated along the switch-on
    branch); otherwise the first crossing, refined by bisection.  Later
    crossings are ignored (latch).  A grid zero without a sign change is
    logged and skipped (tangential touch).
    """
    st = _stepper or _Stepper(sys, ramp, 16, event_tol_rel * ramp.T)
    x_start = np.asarray(x_start, dtype=float)
    T = ramp.T
    sig0 = float(sys.C @ x_start + sys.psi)
    if sig0 <= ramp.sigma1:
        return 0.0

    n = EVENT_GRID
    orbit = affine_orbit(st.e_event, st.we_on, x_start, n)
    sig = orbit @ sys.C + sys.psi
    ts = np.arange(n + 1) * st.dt_event
    h = sig - np.asarray(ramp.phi(ts))

    k_hit = None
    for k in range(1, n + 1):
        if h[k] <= 0.0:
            if h[k] == 0.0 and (k == n or h[k + 1] > 0.0) and h[k - 1] > 0.0:
                log.warning("tangential ramp touch at t=%.6e s ignored (no crossing)",
                            ts[k])
                continue
            k_hit = k
            break
    if k_hit is None:
        return T

    a, b = ts[k_hit - 1], ts[k_hit]
    h_b = h[k_hit]
    if h_b == 0.0:
        return float(b)
    tol = st.event_tol
    while b - a > tol:
        mid = 0.5 * (a + b)
        if st.sigma_on(x_start, mid) - float(ramp.phi(mid)) > 0.0:
            a = mid
        else:
            b = mid
    return float(0.5 * (a + b))


def simulate(sys: LtiSystem, ramp: RampParams, cfg: SimConfig,
             mode: Optional[PeriodicMode] = None) -> SimTrace:
    """Run cfg.periods switching periods from cfg.x0.

    When mode is given, the per-period averages v_n, the averaging error
    u(t), and the period-start deviation norms are recorded as well.
    """
    m = sys.m
    if cfg.x0.shape != (m,):
        raise ValueError(f"x0 has dimension {cfg.x0.shape[0]}, system needs {m}")
    S = cfg.samples_per_period
    T = ramp.T
    st = _Stepper(sys, ramp, S, cfg.event_tol_rel * T)

    n_total = cfg.periods * S
    times = np.empty(n_total)
    states = np.empty((n_total, m))
    fvals = np.empty(n_total)
    taus = np.empty(cfg.periods)
    period_idx = np.repeat(np.arange(cfg.periods), S)
    starts = np.empty((cfg.periods + 1, m))

    x = cfg.x0.copy()
    dt_s = st.dt_sample
    for n in range(cfg.periods):
        starts[n] = x
        tau = switching_time(sys, ramp, x, cfg.event_tol_rel, _stepper=st)
        taus[n] = tau
        base = n * S
        j_on = min(int(np.floor(tau / dt_s + 1e-12)), S - 1)
        if tau >= T:
            j_on = S - 1
        orbit_on = affine_orbit(st.e_sample, st.ws_on, x, j_on)
        states[base:base + j_on + 1] = orbit_on
        x_tau = st.propagate(x, tau, True) if tau > 0.0 else x.copy()
        if j_on < S - 1:
            t_first_off = (j_on + 1) * dt_s
            x_first = st.propagate(x_tau, t_first_off - tau, False)
            orbit_off = affine_orbit(st.e_sample, st.ws_off, x_first,
                                     S - 1 - (j_on + 1))
            states[base + j_on + 1:base + S] = orbit_off
        times[base:base + S] = n * T + np.arange(S) * dt_s
        fvals[base:base + S] = (np.arange(S) * dt_s < tau).astype(float)
        x = st.propagate(x_tau, T - tau, False)
    starts[cfg.periods] = x

    sigma = states @ sys.C + sys.psi
    trace = SimTrace(times=times, states=states, sigma=sigma, f=fvals,
                     tau=taus, period_index=period_idx, period_starts=starts)
    if mode is not None:
        _attach_mode_fields(trace, mode, S, T)
    return trace


def _u_value(s, v, tau0, tau_n):
    """Averaging error u at within-period time s (piecewise linear, exact)."""
    tmin, tmax = min(tau_n, tau0), max(tau_n, tau0)
    sgn = 1.0 if tau_n >= tau0 else -1.0
    return -v * s + sgn * min(max(s - tmin, 0.0), tmax - tmin)


def _attach_mode_fields(trace: SimTrace, mode: PeriodicMode, S, T):
    periods = len(trace.tau)
    v = (trace.tau - mode.tau0) / T
    u = np.empty(periods * S)
    dt_s = T / S
    for n in range(periods):
        for j in range(S):
            u[n * S + j] = _u_value(j * dt_s, v[n], mode.tau0, trace.tau[n])
    x_ref = mode.x0(0.0)
    trace.v = v
    trace.u = u
    trace.deviations = np.linalg.norm(trace.period_starts - x_ref, axis=1)


@dataclass
class DiagnosticsReport:
    v: np.ndarray
    u_bound_ok: bool                  # |u(t)| <= T |v(t)| everywhere
    u_energy_ok: bool                 # int u^2 <= (T^2/3) int v^2 per period
    u_period_reset_ok: bool           # u(nT) = 0 within 1e-9 T
    sector_checked: bool
    sector_bound: float               # 1 / (sigma_star - T L1)
    sector_failures: List[int]
    u_bound_violations: List[int]
    u_energy_violations: List[int]
    converged: bool
    final_deviation: float
    final_tau_error: float
    warnings: List[str] = field(default_factory=list)


def diagnostics(trace: SimTrace, mode: PeriodicMode, sys: LtiSystem,
                ramp: RampParams) -> DiagnosticsReport:
    """Averaging and sector diagnostics of a trace against a known mode.

    All quantities are recomputed from the raw trace; violations are
    reported, never raised.
    """
    T = ramp.T
    S = int(len(trace.times) // len(trace.tau))
    periods = len(trace.tau)
    tau0 = mode.tau0
    v = (trace.tau - tau0) / T

    warnings = []
    u_bound_viol, u_energy_viol = [], []
    reset_ok = True
    for n in range(periods):
        vn = v[n]
        tmin, tmax = min(trace.tau[n], tau0), max(trace.tau[n], tau0)
        u_end = _u_value(T, vn, tau0, trace.tau[n])
        if abs(u_end) > 1e-9 * T:
            reset_ok = False
        if abs(vn) <= V_FLOOR:
            continue
        bound = T * abs(vn) * (1.0 + 1e-12) + 1e-300
        extrema = [abs(_u_value(tmin, vn, tau0, trace.tau[n])),
                   abs(_u_value(tmax, vn, tau0, trace.tau[n]))]
        if trace.u is not None:
            extrema.append(float(np.abs(trace.u[n * S:(n + 1) * S]).max()))
        if max(extrema) > bound:
            u_bound_viol.append(n)
        # exact integral of the piecewise-quadratic u^2 over the period
        segs = ((0.0, tmin), (tmin, tmax), (tmax, T))
        total = 0.0
        for a, b in segs:
            if b <= a:
                continue
            ua = _u_value(a, vn, tau0, trace.tau[n])
            ub = _u_value(b, vn, tau0, trace.tau[n])
            slope = (ub - ua) / (b - a)
            L = b - a
            total += ua * ua * L + ua * slope * L * L + slope * slope * L ** 3 / 3.0
        rhs = (T ** 2 / 3.0) * vn * vn * T
        if total > rhs * (1.0 + 1e-9):
            u_energy_viol.append(n)

    sector_margin = ramp.sigma_star - T * mode.L1
    sector_checked = sector_margin > 0.0
    sector_failures = []
    if not sector_checked:
        warnings.append("sigma_star - T*L1 <= 0: sector check skipped (SectorViolated)")
        k_bound = np.inf
    else:
        k_bound = 1.0 / sector_margin
        sigma0_grid = np.array([mode.sigma0(j * (T / S)) for j in range(S)])
        st = _Stepper(sys, ramp, 16, 1e-12 * T)
        for n in range(periods):
            vn = v[n]
            if abs(vn) <= V_FLOOR:
                continue
            sig_d = trace.sigma[n * S:(n + 1) * S] - sigma0_grid
            cand_d = list(sig_d)
            cand_d.append(trace.sigma[n * S] - sigma0_grid[0])  # t = nT
            # t = nT + tau_n (the proof's witness in the interior case)
            if 0.0 < trace.tau[n] < T:
                x_at_tau = st.propagate(trace.period_starts[n], trace.tau[n], True)
                cand_d.append(float(sys.C @ x_at_tau + sys.psi) - mode.sigma0(trace.tau[n]))
            found = False
            thresh = abs(vn) * sector_margin * (1.0 - 1e-9)
            for sd in cand_d:
                if sd * vn > 0.0 and abs(sd) >= thresh:
                    found = True
                    break
            if not found:
                sector_failures.append(n)

    dev = trace.deviations
    converged = bool(dev is not None and dev[-1] < 1e-6
                     and abs(trace.tau[-1] - tau0) < 1e-6 * T)
    return DiagnosticsReport(
        v=v,
        u_bound_ok=not u_bound_viol,
        u_energy_ok=not u_energy_viol,
        u_period_reset_ok=reset_ok,
        sector_checked=sector_checked,
        sector_bound=float(k_bound),
        sector_failures=sector_failures,
        u_bound_violations=sorted(set(u_bound_viol)),
        u_energy_violations=u_energy_viol,
        converged=converged,
        final_deviation=float(dev[-1]) if dev is not None else np.nan,
        final_tau_error=float(abs(trace.tau[-1] - tau0)),
        warnings=warnings)


def export_csv(trace: SimTrace, path):
    """Trace CSV: t, x_1..x_m, sigma, f, period_index (12 significant digits)."""
    m = trace.states.shape[1]
    header = "t," + ",".join(f"x_{i + 1}" for i in range(m)) + ",sigma,f,period_index"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for k in range(len(trace.times)):
            cols = [f"{trace.times[k]:.12g}"]
            cols += [f"{val:.12g}" for val in trace.states[k]]
            cols.append(f"{trace.sigma[k]:.12g}")
            cols.append(f"{int(trace.f[k])}")
            cols.append(str(int(trace.period_index[k])))
            fh.write(",".join(cols) + "\n")
