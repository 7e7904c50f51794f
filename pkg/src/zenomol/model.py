"""Level scheme, operators and derived scales of the two-ladder molecule.

Levels are indexed ``0 .. n_left-1`` for the left ladder followed by
``n_left .. n_left+n_right-1`` for the right ladder, so level ``1_L`` is
index 0 and level ``1_R`` is index ``n_left``.  Energies are stored as
angular frequencies (E / hbar, rad/s).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class Convention(str, enum.Enum):
    SHIFTED_GROUND = "shifted-ground"
    RAW_ROTATIONAL = "raw-rotational"


class Case(str, enum.Enum):
    SYMMETRIC = "symmetric"
    LEFT_ONLY = "left-only"
    RIGHT_ONLY = "right-only"


class ParameterError(ValueError):
    """Raised for non-physical model parameters."""


@dataclass(frozen=True)
class ModelParams:
    n_left: int = 40
    n_right: int = 40
    omega_left: float = 1.3e10
    omega_right: float = 9.7e9
    rabi: float = 935.0
    alpha_left: float = 0.2
    alpha_right: float = 0.2
    tau: float = 1.0e-5

    def __post_init__(self) -> None:
        for name in ("n_left", "n_right"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ParameterError(f"{name} must be a positive integer, got {value!r}")
        if not self.tau > 0 or not math.isfinite(self.tau):
            raise ParameterError(f"tau must be positive and finite, got {self.tau!r}")
        # rabi = 0 is allowed: it switches off the L <-> R coupling (decoupled chains)
        if not self.rabi >= 0 or not math.isfinite(self.rabi):
            raise ParameterError(f"rabi must be >= 0 and finite, got {self.rabi!r}")
        for name in ("alpha_left", "alpha_right"):
            value = getattr(self, name)
            if not value >= 0 or not math.isfinite(value):
                raise ParameterError(f"{name} must be >= 0, got {value!r}")

    @property
    def dim(self) -> int:
        return self.n_left + self.n_right

    @property
    def rabi_period(self) -> float:
        if self.rabi == 0:
            return math.inf
        return 2.0 * math.pi / self.rabi

    @property
    def diffusion_left(self) -> float:
        """Collisional hopping rate alpha_L^2 / tau of the left chain."""
        return self.alpha_left**2 / self.tau

    @property
    def diffusion_right(self) -> float:
        return self.alpha_right**2 / self.tau

    @property
    def diffusion(self) -> float:
        """Mean rate (D_L + D_R) / 2 that damps the ground-pair coherence."""
        return 0.5 * (self.diffusion_left + self.diffusion_right)

    def replace(self, **changes) -> "ModelParams":
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return ModelParams(**fields)

    @classmethod
    def from_rabi_units(cls, *, tau_inv_tr: float, **kwargs) -> "ModelParams":
        """Build params with the collision rate given in units of 1/T_R."""
        rabi = kwargs.get("rabi", cls.rabi)
        tau = 2.0 * math.pi / rabi / tau_inv_tr
        return cls(tau=tau, **kwargs)


@dataclass(frozen=True)
class LevelScheme:
    energies_left: np.ndarray
    energies_right: np.ndarray
    degeneracy_convention: Convention

    @property
    def energies(self) -> np.ndarray:
        return np.concatenate([self.energies_left, self.energies_right])

    @property
    def ground_degenerate(self) -> bool:
        return self.energies_left[0] == self.energies_right[0]


@dataclass(frozen=True)
class OperatorSet:
    h0_diagonal: np.ndarray
    rabi_coupling: tuple[int, int, float]
    v_left: np.ndarray
    v_right: np.ndarray

    def h1(self) -> np.ndarray:
        i, j, rabi = self.rabi_coupling
        n = self.h0_diagonal.size
        out = np.zeros((n, n))
        out[i, j] = out[j, i] = rabi
        return out

    def v_total(self, alpha_left: float, alpha_right: float) -> np.ndarray:
        nl = self.v_left.shape[0]
        n = self.h0_diagonal.size
        out = np.zeros((n, n))
        out[:nl, :nl] = alpha_left * self.v_left
        out[nl:, nl:] = alpha_right * self.v_right
        return out


def rotational_energy(omega: float, level: int | np.ndarray, convention: Convention | str) -> np.ndarray:
    convention = Convention(convention)
    n = np.asarray(level, dtype=float)
    k = n * (n + 1.0)
    if convention is Convention.SHIFTED_GROUND:
        k = k - 2.0
    return omega * k


def build_level_scheme(params: ModelParams, convention: Convention | str = Convention.SHIFTED_GROUND) -> LevelScheme:
    convention = Convention(convention)
    left = rotational_energy(params.omega_left, np.arange(1, params.n_left + 1), convention)
    right = rotational_energy(params.omega_right, np.arange(1, params.n_right + 1), convention)
    return LevelScheme(left, right, convention)


def path_coupling(n: int) -> np.ndarray:
    """Nearest-neighbour coupling matrix: zero diagonal, ones on the first off-diagonals."""
    v = np.zeros((n, n))
    idx = np.arange(n - 1)
    v[idx, idx + 1] = 1.0
    v[idx + 1, idx] = 1.0
    return v


def build_operators(params: ModelParams, scheme: LevelScheme) -> OperatorSet:
    return OperatorSet(
        h0_diagonal=scheme.energies,
        rabi_coupling=(0, params.n_left, params.rabi),
        v_left=path_coupling(params.n_left),
        v_right=path_coupling(params.n_right),
    )


def min_offresonant_gap(scheme: LevelScheme) -> float:
    """Smallest |E_mL - E_nR| over excited pairs m_L, n_R > 1 (exhaustive scan).

    Returns ``inf`` when either ladder has no excited level.  A zero result
    means some excited pair is degenerate and the reduction does not apply.
    """
    left = np.asarray(scheme.energies_left[1:], dtype=float)
    right = np.asarray(scheme.energies_right[1:], dtype=float)
    if left.size == 0 or right.size == 0:
        return math.inf
    return float(np.min(np.abs(left[:, None] - right[None, :])))


@dataclass(frozen=True)
class TimescaleReport:
    gap: float
    rabi_ratio: float
    collision_ratio: float
    threshold: float
    rabi_ok: bool
    collision_ok: bool

    @property
    def ok(self) -> bool:
        return self.rabi_ok and self.collision_ok

    def as_dict(self) -> dict:
        return {
            "gap": self.gap,
            "rabi_ratio": self.rabi_ratio,
            "collision_ratio": self.collision_ratio,
            "threshold": self.threshold,
            "rabi_ok": self.rabi_ok,
            "collision_ok": self.collision_ok,
            "ok": self.ok,
        }


def _ratio(gap: float, rate: float) -> float:
    if rate == 0:
        return math.inf
    return gap / rate


def validate_timescales(
    params: ModelParams,
    scheme: LevelScheme | None = None,
    *,
    threshold: float = 100.0,
    gap: float | None = None,
) -> TimescaleReport:
    """Check that the off-resonant gap dominates both the Rabi and collision rates."""
    if gap is None:
        scheme = scheme if scheme is not None else build_level_scheme(params)
        gap = min_offresonant_gap(scheme)
    rabi_ratio = _ratio(gap, params.rabi)
    collision_ratio = _ratio(gap, 1.0 / params.tau)
    return TimescaleReport(
        gap=gap,
        rabi_ratio=rabi_ratio,
        collision_ratio=collision_ratio,
        threshold=threshold,
        rabi_ok=rabi_ratio >= threshold,
        collision_ok=collision_ratio >= threshold,
    )


def scaling_parameter(params: ModelParams, case: Case | str = Case.SYMMETRIC) -> float:
    """Dimensionless collision strength per Rabi period.

    The symmetric case uses the mean squared coupling; the one-sided cases
    carry the extra factor 1/2 of their local definition, so in every case
    ``x = D * T_R`` with ``D = (D_L + D_R) / 2``.
    """
    case = Case(case)
    if params.rabi <= 0:
        raise ParameterError("scaling parameter needs a nonzero Rabi frequency")
    t_r = params.rabi_period
    if case is Case.SYMMETRIC:
        alpha_sq = 0.5 * (params.alpha_left**2 + params.alpha_right**2)
        return alpha_sq * t_r / params.tau
    if case is Case.LEFT_ONLY:
        return params.alpha_left**2 * t_r / (2.0 * params.tau)
    return params.alpha_right**2 * t_r / (2.0 * params.tau)


def dissociation_time_from_x(n_levels: int, x: float, refined: bool = False) -> float:
    """Diffusive time to reach the top of an ``n_levels`` ladder, in Rabi periods."""
    if x == 0:
        return math.inf
    t_d = n_levels**2 / x
    if refined:
        t_d /= math.pi**2
    return t_d


def dissociation_time(params: ModelParams, refined: bool = False, ladder: str = "left") -> float:
    """Dissociation time of one ladder, using its own ``x_s = alpha_s^2 T_R / tau``."""
    if ladder == "left":
        n, alpha = params.n_left, params.alpha_left
    elif ladder == "right":
        n, alpha = params.n_right, params.alpha_right
    else:
        raise ValueError(f"ladder must be 'left' or 'right', got {ladder!r}")
    x = alpha**2 * params.rabi_period / params.tau
    return dissociation_time_from_x(n, x, refined)
