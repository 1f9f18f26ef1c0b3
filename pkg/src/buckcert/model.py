"""Closed-loop state-space assembly for the voltage-mode controlled buck.

State ordering is fixed as (power stage, sensor, compensator); sensor and
compensator state dimensions may be zero (pure feedthrough blocks).
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import numerics
from .numerics import NotHurwitz

PROPORTIONAL = "proportional"
FULL_LOOP = "full_loop"


@dataclass
class PowerStageParams:
    """Buck power stage: load R (ohm), filter C0 (F), L (H), source Vs (V)."""

    R: float
    C0: float
    L: float
    Vs: float

    def __post_init__(self):
        for name in ("R", "C0", "L", "Vs"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0.0:
                raise ValueError(f"power stage parameter {name} must be finite and > 0")
            setattr(self, name, v)


@dataclass
class RampParams:
    """Modulator sawtooth: sigma_r(t) = sigma1 + sigma_star*(t - nT)/T."""

    sigma1: float
    sigma_star: float
    T: float

    def __post_init__(self):
        for name in ("sigma1", "sigma_star", "T"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0.0:
                raise ValueError(f"ramp parameter {name} must be finite and > 0")
            setattr(self, name, v)

    def phi(self, t):
        """Ramp value at within-period time t in [0, T]."""
        return self.sigma1 + self.sigma_star * np.asarray(t) / self.T


@dataclass
class StateSpaceBlock:
    """SISO state-space block (A, B, C, D); zero state dimension allowed."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if self.A.size == 0:
            self.A = np.zeros((0, 0))
        k = self.A.shape[0]
        if self.A.shape != (k, k):
            raise ValueError(f"block A must be square, got {self.A.shape}")
        self.B = np.asarray(self.B, dtype=float).reshape(-1)
        self.C = np.asarray(self.C, dtype=float).reshape(-1)
        if self.B.shape != (k,) or self.C.shape != (k,):
            raise ValueError(f"block B/C must have length {k}")
        self.D = float(self.D)

    @property
    def order(self):
        return self.A.shape[0]


@dataclass
class ControlConfig:
    variant: str
    Vref: float
    a: Optional[float] = None
    compensator: Optional[StateSpaceBlock] = None
    sensor: Optional[StateSpaceBlock] = None

    def __post_init__(self):
        self.Vref = float(self.Vref)
        if self.variant == PROPORTIONAL:
            if self.a is None or float(self.a) <= 0.0:
                raise ValueError("proportional control requires gain a > 0")
            if self.compensator is not None or self.sensor is not None:
                raise ValueError("proportional control takes no compensator/sensor blocks")
            self.a = float(self.a)
        elif self.variant == FULL_LOOP:
            if self.compensator is None or self.sensor is None:
                raise ValueError("full_loop control requires compensator and sensor blocks")
        else:
            raise ValueError(f"unknown control variant {self.variant!r}")


@dataclass
class LtiSystem:
    """Linear part dx/dt = A x + B f + q, sigma = C x + psi (A Hurwitz)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    psi: float
    q: np.ndarray = field(default=None)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        m = self.A.shape[0]
        self.B = np.asarray(self.B, dtype=float).reshape(m)
        self.C = np.asarray(self.C, dtype=float).reshape(m)
        self.psi = float(self.psi)
        self.q = (np.zeros(m) if self.q is None
                  else np.asarray(self.q, dtype=float).reshape(m))
        if not numerics.is_hurwitz(self.A):
            raise NotHurwitz("closed-loop A matrix is not Hurwitz stable")

    @property
    def m(self):
        return self.A.shape[0]

    def sigma(self, x):
        return float(self.C @ x + self.psi)


def build_power_stage(p: PowerStageParams):
    """Power stage matrices in state order (i_L, U)."""
    A_p = np.array([[0.0, -1.0 / p.L],
                    [1.0 / p.C0, -1.0 / (p.R * p.C0)]])
    B_p = np.array([p.Vs / p.L, 0.0])
    C_p = np.array([0.0, 1.0])
    return A_p, B_p, C_p


def assemble(p: PowerStageParams, c: ControlConfig) -> LtiSystem:
    """Combine power stage and control loop into the closed-loop system."""
    A_p, B_p, C_p = build_power_stage(p)
    if c.variant == PROPORTIONAL:
        return LtiSystem(A=A_p, B=B_p, C=-c.a * C_p, psi=c.a * c.Vref)

    sen, comp = c.sensor, c.compensator
    ks, kc = sen.order, comp.order
    m = 2 + ks + kc
    A = np.zeros((m, m))
    A[:2, :2] = A_p
    A[2:2 + ks, :2] = np.outer(sen.B, C_p)
    A[2:2 + ks, 2:2 + ks] = sen.A
    A[2 + ks:, :2] = -np.outer(comp.B, sen.D * C_p)
    A[2 + ks:, 2:2 + ks] = -np.outer(comp.B, sen.C)
    A[2 + ks:, 2 + ks:] = comp.A
    B = np.zeros(m)
    B[:2] = B_p
    q = np.zeros(m)
    q[2 + ks:] = comp.B * c.Vref
    C = np.concatenate([-comp.D * sen.D * C_p, -comp.D * sen.C, comp.C])
    return LtiSystem(A=A, B=B, C=C, psi=comp.D * c.Vref, q=q)


def shift(sys: LtiSystem) -> LtiSystem:
    """Equilibrium shift x~ = x + A^{-1} q, removing the forcing term q.

    The offset becomes psi - C A^{-1} q; A, B, C are unchanged.
    """
    if not np.any(sys.q):
        return LtiSystem(A=sys.A.copy(), B=sys.B.copy(), C=sys.C.copy(),
                         psi=sys.psi)
    aq = numerics.solve(sys.A, sys.q)
    return LtiSystem(A=sys.A.copy(), B=sys.B.copy(), C=sys.C.copy(),
                     psi=sys.psi - float(sys.C @ aq))
