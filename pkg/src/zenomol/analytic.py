"""Closed-form and semi-analytic solutions.

Times are measured in Rabi periods throughout, except ``short_time_pl``
which takes seconds.  The diffusion kernel is built from exponentially
scaled modified Bessel functions, evaluated here without overflow for
arguments up to 1e6.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.integrate import solve_ivp

from .model import ParameterError

TWO_PI = 2.0 * math.pi
EIGHT_PI_SQ = 8.0 * math.pi**2
#: prefactor 2*sqrt(2)*pi of the one-sided closed forms
ONE_SIDED_PREFACTOR = 2.0 * math.sqrt(2.0) * math.pi
#: largest argument for which exp(z^2) stays representable in double precision
ERFI_GUARD = 26.0

# --------------------------------------------------------------------------
# scaled modified Bessel functions

_SERIES_LIMIT = 1.0
_HANKEL_MIN = 1.0e3
_HANKEL_TERMS = 30
_RESCALE = 1.0e250


def _series_scaled(n: int, t: float) -> float:
    q = 0.25 * t * t
    # log(t) - log(2) rather than log(t/2): the halving underflows for subnormal t
    term = math.exp(n * (math.log(t) - math.log(2.0)) - math.lgamma(n + 1) - t)
    total = term
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + n))
        total += term
        if term <= 1e-17 * total:
            return total


def _hankel_scaled(n: int, t: float) -> float:
    mu = 4.0 * n * n
    term = 1.0
    total = 1.0
    for k in range(1, _HANKEL_TERMS):
        term *= -(mu - (2 * k - 1) ** 2) / (k * 8.0 * t)
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    return total / math.sqrt(TWO_PI * t)


def _miller_start(nmax: int, t: float) -> int:
    # beyond this index e^{-t} I_k(t) is far below 1e-17 relative to the low orders
    return int(nmax + 30 + math.sqrt(100.0 * t))


def bessel_i_scaled_sequence(nmax: int, t: float) -> np.ndarray:
    """``e^{-t} I_k(t)`` for ``k = 0..nmax`` by normalised downward recurrence.

    The normalisation uses the identity ``I_0 + 2 sum_{k>=1} I_k = e^t``.
    """
    if nmax < 0:
        raise ValueError("nmax must be >= 0")
    if not t >= 0 or not math.isfinite(t):
        raise ValueError(f"argument must be finite and >= 0, got {t!r}")
    out = np.zeros(nmax + 1)
    if t == 0.0:
        out[0] = 1.0
        return out
    if t <= _SERIES_LIMIT:
        # one recurrence step grows by ~2k/t, which overflows before rescaling for small t
        out[:] = [_series_scaled(k, t) for k in range(nmax + 1)]
        return out
    start = _miller_start(nmax, t)
    two_over_t = 2.0 / t
    y_next = 0.0
    y = 1e-300
    total = 0.0
    for k in range(start, 0, -1):
        if k <= nmax:
            out[k] = y
        total += 2.0 * y
        y_prev = k * two_over_t * y + y_next
        y_next, y = y, y_prev
        if y > _RESCALE:
            y *= 1.0 / _RESCALE
            y_next *= 1.0 / _RESCALE
            total *= 1.0 / _RESCALE
            out *= 1.0 / _RESCALE
    out[0] = y
    total += y
    return out / total


def bessel_i_scaled(n: int, t: float) -> float:
    """``e^{-t} I_n(t)`` for integer ``n >= 0`` and ``0 <= t <= 1e6``."""
    n = abs(int(n))
    t = float(t)
    if not t >= 0 or not math.isfinite(t):
        raise ValueError(f"argument must be finite and >= 0, got {t!r}")
    if t == 0.0:
        return 1.0 if n == 0 else 0.0
    if t <= _SERIES_LIMIT:
        return _series_scaled(n, t)
    if t >= _HANKEL_MIN and 4.0 * n * n <= t:
        return _hankel_scaled(n, t)
    return float(bessel_i_scaled_sequence(n, t)[n])


def _g(z: float) -> float:
    """``e^{-z} (I_0 + I_1)(z)``, the ground-level occupation of a free half-line walk."""
    if z == 0.0:
        return 1.0
    if z <= _SERIES_LIMIT:
        return _series_scaled(0, z) + _series_scaled(1, z)
    if z >= _HANKEL_MIN:
        return _hankel_scaled(0, z) + _hankel_scaled(1, z)
    seq = bessel_i_scaled_sequence(1, z)
    return float(seq[0] + seq[1])


# --------------------------------------------------------------------------
# free diffusion


def walk_probability(n: int, t: float) -> float:
    """Occupation of site ``n`` of the unbounded walk started at site 1."""
    return bessel_i_scaled(abs(n - 1), 2.0 * t)


def halfline_population(n: int, dt: float) -> float:
    """Population of level ``n >= 1`` of the reflecting half-line chain at ``D t``."""
    if n < 1:
        raise ValueError("level index must be >= 1")
    return walk_probability(n, dt) + walk_probability(1 - n, dt)


def p1_exact(dt: float) -> float:
    """Ground-level population ``e^{-2Dt} [I_0 + I_1](2Dt)``."""
    return halfline_population(1, dt)


def halfline_profile(dt: float, tol: float = 1e-17) -> np.ndarray:
    """Populations ``p_1 .. p_K`` with ``K`` chosen so the discarded tail is below ``tol``."""
    z = 2.0 * dt
    k = 8
    while True:
        seq = bessel_i_scaled_sequence(k, z)
        if seq[-1] < tol * 1e-3 and seq[-1] <= seq[-2]:
            break
        k *= 2
    pops = seq[:-1] + seq[1:]
    last = np.nonzero(pops > tol * 1e-3)[0]
    return pops[: (last[-1] + 1 if last.size else 1)]


def moments(dt: float) -> tuple[float, float]:
    """Mean level ``mu`` and second moment ``sigma^2`` of the half-line chain."""
    if dt < 0:
        raise ValueError("Dt must be >= 0")
    z = 2.0 * dt
    if z == 0.0:
        return 1.0, 1.0
    seq = bessel_i_scaled_sequence(1, z) if z < _HANKEL_MIN else (_hankel_scaled(0, z), _hankel_scaled(1, z))
    i0, i1 = seq[0], seq[1]
    mu = 0.5 + 0.5 * ((1.0 + 4.0 * dt) * i0 + 4.0 * dt * i1)
    return mu, 2.0 * dt + mu


def moments_asymptotic(dt: float) -> tuple[float, float]:
    """Leading large-``Dt`` behaviour ``(sqrt(4Dt/pi), sqrt(2Dt))`` of ``(mu, sigma)``."""
    return math.sqrt(4.0 * dt / math.pi), math.sqrt(2.0 * dt)


def gaussian_walk_bound(n: int, t: float) -> float:
    """Gaussian envelope ``(4 pi t)^{-1/2} exp(-(n-1)^2 / 4t)`` of the free walk."""
    return math.exp(-((n - 1) ** 2) / (4.0 * t)) / math.sqrt(4.0 * math.pi * t)


# --------------------------------------------------------------------------
# coupled dynamics


def equilibrium_pl(alpha_left: float, alpha_right: float) -> float:
    if alpha_left < 0 or alpha_right < 0:
        raise ParameterError("couplings must be >= 0")
    if alpha_left + alpha_right == 0:
        raise ParameterError("equilibrium undefined when both couplings vanish")
    return alpha_left / (alpha_left + alpha_right)


def short_time_pl(t, rabi: float):
    """Quadratic short-time law ``1 - Omega^2 t^2`` (``t`` in seconds)."""
    t = np.asarray(t, dtype=float)
    return 1.0 - (rabi * t) ** 2


def erfi(z: float) -> float:
    """Imaginary error function ``(2/sqrt(pi)) int_0^z exp(s^2) ds`` for ``z >= 0``."""
    z = float(z)
    if z < 0:
        raise ValueError("erfi is defined here for z >= 0")
    if z > ERFI_GUARD:
        raise OverflowError(f"erfi({z}) overflows double precision (guard at {ERFI_GUARD})")
    return float(special.erfi(z))


def scaled_erfi(w):
    """``exp(-w^2) erfi(w)`` via the Dawson integral; never overflows."""
    return 2.0 / math.sqrt(math.pi) * special.dawsn(np.asarray(w, dtype=float))


#: maximum of exp(-y^2) erfi(y), attained at the root of 1 = 2 y F(y)
SCALED_ERFI_MAX = float(2.0 / math.sqrt(math.pi) * 0.5410442246351818)


class Shift(str, enum.Enum):
    PRINTED = "printed"
    PREFACTOR = "prefactor"
    NONE = "none"


def one_sided_shift(x: float, shift: Shift | str = Shift.PRINTED) -> float:
    shift = Shift(shift)
    if shift is Shift.PRINTED:
        return 2.0 * math.sqrt(TWO_PI) / x
    if shift is Shift.PREFACTOR:
        return ONE_SIDED_PREFACTOR / x
    return 0.0


def _w(t, x: float, shift: Shift | str) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.sqrt(EIGHT_PI_SQ * t / x) + one_sided_shift(x, shift)


def case_a_pl(t, x: float, variant: str = "exact-ansatz"):
    """Symmetric-coupling solution of the first-order ansatz equation.

    ``variant='exact-ansatz'`` is the full Bessel form; ``'stretched'`` is its
    ``xt >> 1`` limit with exponent proportional to ``sqrt(t)``.
    """
    t = np.asarray(t, dtype=float)
    if variant == "exact-ansatz":
        z = 2.0 * x * t
        flat = np.atleast_1d(z).ravel()
        bracket = np.empty_like(flat)
        for i, zi in enumerate(flat):
            if zi == 0.0:
                bracket[i] = 0.0
                continue
            if zi >= _HANKEL_MIN:
                i0, i1 = _hankel_scaled(0, zi), _hankel_scaled(1, zi)
            elif zi <= _SERIES_LIMIT:
                i0, i1 = _series_scaled(0, zi), _series_scaled(1, zi)
            else:
                i0, i1 = bessel_i_scaled_sequence(1, zi)
            bracket[i] = 1.0 - (1.0 + 2.0 * zi) * i0 - 2.0 * zi * i1
        bracket = bracket.reshape(np.shape(z))
        return 0.5 + 0.5 * np.exp(EIGHT_PI_SQ / x**2 * bracket)
    if variant == "stretched":
        return 0.5 + 0.5 * np.exp(EIGHT_PI_SQ / x**2 - 32.0 * math.pi**1.5 * np.sqrt(t / x**3))
    raise ValueError(f"unknown case A variant {variant!r}")


def case_a_relaxation(x: float) -> float:
    """Time at which the stretched exponent reaches one: ``x^3 / (1024 pi^3)``."""
    return x**3 / (1024.0 * math.pi**3)


def case_b_pl(t, x: float, shift: Shift | str = Shift.PRINTED):
    w = _w(t, x, shift)
    return 1.0 - ONE_SIDED_PREFACTOR / x * scaled_erfi(w)


def case_b_minimum(x: float) -> float:
    """Closed-form depth of the single minimum, with the constant 2.7."""
    return 1.0 - 2.7 / x


def case_b_tail(t, x: float):
    t = np.asarray(t, dtype=float)
    return 1.0 - np.sqrt(4.0 / (math.pi * x * t))


def case_c_pl(t, x: float, shift: Shift | str = Shift.PRINTED):
    w = _w(t, x, shift)
    return np.exp(-w * w) + ONE_SIDED_PREFACTOR / x * scaled_erfi(w)


def case_c_relaxation(x: float, shift: Shift | str = Shift.PRINTED) -> float:
    """e^{-1} crossing of ``exp(-w^2)``: ``w = 1``."""
    s = one_sided_shift(x, shift)
    if s >= 1.0:
        return 0.0
    return x * (1.0 - s) ** 2 / EIGHT_PI_SQ


# --------------------------------------------------------------------------
# pendulum equation


class CaseKind(str, enum.Enum):
    A = "A"
    B = "B"
    C = "C"
    GENERAL = "general"


@dataclass(frozen=True)
class CaseSpec:
    """A coupled-dynamics case in Rabi-period units.

    ``x`` is the case-local scaling parameter.  The chain rates ``d_left`` and
    ``d_right`` (``D_s T_R``) follow from it for cases A, B and C and must be
    given explicitly for ``general``.
    """

    case: CaseKind
    x: float
    d_left: float | None = None
    d_right: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "case", CaseKind(self.case))
        if not self.x > 0:
            raise ParameterError("x must be > 0")
        rates = {
            CaseKind.A: (self.x, self.x),
            CaseKind.B: (2.0 * self.x, 0.0),
            CaseKind.C: (0.0, 2.0 * self.x),
        }
        if self.case is CaseKind.GENERAL:
            if self.d_left is None or self.d_right is None:
                raise ParameterError("general case needs d_left and d_right")
        else:
            dl, dr = rates[self.case]
            object.__setattr__(self, "d_left", dl)
            object.__setattr__(self, "d_right", dr)

    @classmethod
    def from_params(cls, params) -> "CaseSpec":
        t_r = params.rabi_period
        dl, dr = params.diffusion_left * t_r, params.diffusion_right * t_r
        return cls(CaseKind.GENERAL, 0.5 * (dl + dr), dl, dr)

    @property
    def damping(self) -> float:
        return 0.5 * (self.d_left + self.d_right)

    @property
    def valid(self) -> bool:
        """Whether the first-order closed form of this case is inside its derivation window."""
        if self.case is CaseKind.A:
            return self.x > 10.0
        if self.case in (CaseKind.B, CaseKind.C):
            return self.x > 10.0 * ONE_SIDED_PREFACTOR
        return False

    @property
    def equilibrium(self) -> float:
        if self.d_left + self.d_right == 0:
            raise ParameterError("no collisions: equilibrium undefined")
        a_l, a_r = math.sqrt(self.d_left), math.sqrt(self.d_right)
        return a_l / (a_l + a_r)


def pendulum_solve(case: CaseSpec, t_grid, *, rabi_sq: float = 4.0 * math.pi**2,
                   rtol: float = 1e-10, atol: float = 1e-12) -> np.ndarray:
    """Integrate ``P'' + x P' + 2 Omega^2 T_R^2 (P (f_L + f_R) - f_R) = 0`` from rest at ``P = 1``.

    Times in Rabi periods; ``rabi_sq`` is ``(Omega T_R)^2``, which is ``4 pi^2``
    for the physical system and ``0`` to switch the forcing off.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    dl, dr, gamma = case.d_left, case.d_right, case.damping
    k = 2.0 * rabi_sq

    def rhs(t, y):
        fl = _g(2.0 * dl * t)
        fr = _g(2.0 * dr * t)
        return [y[1], -gamma * y[1] - k * (y[0] * (fl + fr) - fr)]

    t0 = min(0.0, float(t_grid[0]))
    sol = solve_ivp(rhs, (t0, float(t_grid[-1])), [1.0, 0.0], method="DOP853", t_eval=t_grid, rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"pendulum integration failed: {sol.message}")
    return sol.y[0]


# --------------------------------------------------------------------------
# series diagnostics


def normalized_excess(p_left, p_inf: float, p_start: float = 1.0) -> np.ndarray:
    return (np.asarray(p_left, dtype=float) - p_inf) / (p_start - p_inf)


def crossing_time(t, values, level: float = math.exp(-1.0)) -> float:
    """First time ``values`` falls to ``level``, by linear interpolation; ``nan`` if never."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    below = np.nonzero(v <= level)[0]
    if below.size == 0:
        return math.nan
    i = int(below[0])
    if i == 0:
        return float(t[0])
    t0, t1, v0, v1 = t[i - 1], t[i], v[i - 1], v[i]
    return float(t0 + (level - v0) * (t1 - t0) / (v1 - v0))


def relaxation_time(t, p_left, p_inf: float, p_start: float = 1.0) -> float:
    """e^{-1} crossing of the normalised excess population."""
    return crossing_time(t, normalized_excess(p_left, p_inf, p_start))


def fit_stretched_exponent(t, p_left, p_inf: float, p_start: float = 1.0,
                           window: tuple[float, float] = (0.05, 0.9)) -> tuple[float, float]:
    """Fit ``excess = exp(-c t^beta)`` by least squares on ``log(-log excess)`` vs ``log t``.

    Only samples with normalised excess inside ``window`` are used.
    Returns ``(beta, c)``.
    """
    t = np.asarray(t, dtype=float)
    e = normalized_excess(p_left, p_inf, p_start)
    mask = (t > 0) & (e > window[0]) & (e < window[1])
    if mask.sum() < 3:
        raise ValueError("too few samples inside the fit window")
    slope, intercept = np.polyfit(np.log(t[mask]), np.log(-np.log(e[mask])), 1)
    return float(slope), float(math.exp(intercept))
