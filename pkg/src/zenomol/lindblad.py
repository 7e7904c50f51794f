"""Deterministic integrators: full Lindblad equation, reduced slow-sector equation, free chains.

Both generators are linear with constant coefficients, so each is assembled
once as a real matrix acting on a real parameterisation of the state and
handed to an embedded Runge-Kutta integrator (DOP853).  The full density
matrix is parameterised by its diagonal plus the real and imaginary parts
of the strict upper triangle, which keeps it Hermitian by construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp

from .model import LevelScheme, ModelParams, build_level_scheme, build_operators, path_coupling
from .series import SeriesResult


class Mode(str, enum.Enum):
    FULL = "full"
    REDUCED = "reduced"
    CHAINS_ONLY = "chains-only"


class StiffnessError(RuntimeError):
    """The explicit full-master integration would take too many steps."""


class GridError(ValueError):
    """Sample grid unsuitable for the requested finite-difference check."""


@dataclass(frozen=True)
class GeneratorSpec:
    mode: Mode
    params: ModelParams
    scheme: LevelScheme | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.scheme is None:
            object.__setattr__(self, "scheme", build_level_scheme(self.params))

    @property
    def rabi(self) -> float:
        return 0.0 if self.mode is Mode.CHAINS_ONLY else self.params.rabi


# --------------------------------------------------------------------------
# full master equation


def _full_operators(spec: GeneratorSpec) -> tuple[np.ndarray, np.ndarray]:
    """Effective non-Hermitian Hamiltonian K and collision operator V.

    The generator is ``-i (K rho - rho K^dagger) + V rho V / tau`` with
    ``K = H0 + H1 + V / tau - i V^2 / (2 tau)``.
    """
    p = spec.params
    ops = build_operators(p, spec.scheme)
    v = ops.v_total(p.alpha_left, p.alpha_right)
    h = np.diag(ops.h0_diagonal).astype(complex) + v / p.tau
    if spec.rabi:
        h += ops.h1()
    k = h - 0.5j * (v @ v) / p.tau
    return k, v


def full_lindblad_rhs(rho: np.ndarray, spec: GeneratorSpec) -> np.ndarray:
    k, v = _full_operators(spec)
    return -1j * (k @ rho - rho @ k.conj().T) + (v @ rho @ v) / spec.params.tau


class HermitianBasis:
    """Real coordinates of an n x n Hermitian matrix (length n^2)."""

    def __init__(self, n: int) -> None:
        self.n = n
        self.iu = np.triu_indices(n, 1)
        self.m = self.iu[0].size

    def to_vector(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho)
        return np.concatenate([np.diag(rho).real, rho[self.iu].real, rho[self.iu].imag])

    def to_matrix(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        n, m = self.n, self.m
        lead = y.shape[:-1]
        rho = np.zeros(lead + (n, n), dtype=complex)
        idx = np.arange(n)
        rho[..., idx, idx] = y[..., :n]
        upper = y[..., n : n + m] + 1j * y[..., n + m :]
        rho[..., self.iu[0], self.iu[1]] = upper
        rho[..., self.iu[1], self.iu[0]] = upper.conj()
        return rho


def full_generator_matrix(spec: GeneratorSpec) -> np.ndarray:
    """The full Lindblad generator as a real n^2 x n^2 matrix on Hermitian coordinates."""
    n = spec.params.dim
    basis = HermitianBasis(n)
    k, v = _full_operators(spec)
    kd = k.conj().T
    tau = spec.params.tau
    size = n * n
    out = np.empty((size, size))
    for j in range(size):
        e = np.zeros(size)
        e[j] = 1.0
        rho = basis.to_matrix(e)
        d = -1j * (k @ rho - rho @ kd) + (v @ rho @ v) / tau
        out[:, j] = basis.to_vector(d)
    return out


@dataclass
class DensitySeries:
    """Density matrices sampled on ``t`` (seconds)."""

    t: np.ndarray
    rho: np.ndarray
    params: ModelParams
    steps: int = 0

    @property
    def t_tr(self) -> np.ndarray:
        return self.t / self.params.rabi_period

    @property
    def populations(self) -> np.ndarray:
        return np.einsum("tii->ti", self.rho).real

    @property
    def trace_error(self) -> float:
        return float(np.max(np.abs(np.einsum("tii->t", self.rho) - 1.0)))

    @property
    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.rho - np.conj(np.swapaxes(self.rho, 1, 2)))))

    @property
    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.rho)))

    def element(self, i: int, j: int) -> np.ndarray:
        return self.rho[:, i, j]

    def to_series(self) -> SeriesResult:
        nl = self.params.n_left
        pops = self.populations
        c = self.rho[:, 0, nl]
        return SeriesResult(
            t_tr=self.t_tr,
            p_left=pops[:, :nl].sum(axis=1),
            populations=pops,
            n_left=nl,
            coherence=-2.0 * c.imag,
            label="full-master",
            meta={"steps": self.steps},
        )


def estimate_full_steps(spec: GeneratorSpec, t_span: float, steps_per_period: float = 4.0) -> float:
    """Rough explicit step count: periods of the fastest Bohr frequency times a per-period budget."""
    p = spec.params
    e = spec.scheme.energies
    fastest = float(np.max(e) - np.min(e)) + p.rabi + 4.0 * max(p.alpha_left, p.alpha_right) / p.tau
    return fastest * t_span / (2.0 * math.pi) * steps_per_period


def integrate_full(
    rho0: np.ndarray,
    spec: GeneratorSpec,
    t_grid: np.ndarray,
    *,
    rtol: float = 1e-8,
    atol: float = 1e-11,
    max_steps: float = 2e6,
) -> DensitySeries:
    """Integrate the full Lindblad equation and sample it on ``t_grid`` (seconds)."""
    t_grid = np.asarray(t_grid, dtype=float)
    t0 = 0.0 if t_grid[0] > 0 else float(t_grid[0])
    span = float(t_grid[-1] - t0)
    estimate = estimate_full_steps(spec, span)
    if estimate > max_steps:
        raise StiffnessError(
            f"full master needs ~{estimate:.3g} explicit steps (cap {max_steps:.3g}); "
            "shrink the spectrum or the time span, or use the reduced equation"
        )
    basis = HermitianBasis(spec.params.dim)
    gen = full_generator_matrix(spec)
    y0 = basis.to_vector(0.5 * (rho0 + np.conj(rho0).T))
    sol = solve_ivp(
        lambda t, y: gen @ y,
        (t0, float(t_grid[-1])),
        y0,
        method="DOP853",
        t_eval=t_grid,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise RuntimeError(f"full master integration failed: {sol.message}")
    return DensitySeries(t=t_grid, rho=basis.to_matrix(sol.y.T), params=spec.params, steps=int(sol.nfev // 12))


# --------------------------------------------------------------------------
# reduced master equation


@dataclass
class ReducedState:
    """Populations of both ladders plus the ground-pair coherence rho_{1L,1R}."""

    p_left: np.ndarray
    p_right: np.ndarray
    coherence: complex = 0j

    @classmethod
    def ground_left(cls, n_left: int, n_right: int) -> "ReducedState":
        p_left = np.zeros(n_left)
        p_left[0] = 1.0
        return cls(p_left, np.zeros(n_right), 0j)

    @classmethod
    def from_vector(cls, y: np.ndarray, n_left: int) -> "ReducedState":
        n_right = y.size - n_left - 2
        return cls(y[:n_left].copy(), y[n_left : n_left + n_right].copy(), complex(y[-2], y[-1]))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.p_left, self.p_right, [self.coherence.real, self.coherence.imag]])

    @property
    def pc(self) -> float:
        """Coherence term p^c = -2 Im rho_{1L,1R}; dP_L/dt = Omega p^c."""
        return -2.0 * self.coherence.imag

    @property
    def total(self) -> float:
        return float(self.p_left.sum() + self.p_right.sum())


def chain_matrix(n: int) -> sparse.csr_matrix:
    """Tridiagonal stochastic matrix with reflecting ends (-1 at both corners)."""
    v = path_coupling(n) if n > 1 else np.zeros((1, 1))
    return sparse.csr_matrix(v - np.diag(v.sum(axis=1)))


def reduced_generator_matrix(spec: GeneratorSpec) -> sparse.csr_matrix:
    p = spec.params
    nl, nr = p.n_left, p.n_right
    dl, dr = p.diffusion_left, p.diffusion_right
    gamma = 0.5 * (dl + dr)
    rabi = spec.rabi
    size = nl + nr + 2
    re, im = nl + nr, nl + nr + 1
    extra = sparse.lil_matrix((size, size))
    # d p_1L = -2 Omega Im c ; d p_1R = +2 Omega Im c ; d c = i Omega (p_1L - p_1R) - gamma c
    extra[0, im] = -2.0 * rabi
    extra[nl, im] = 2.0 * rabi
    extra[im, 0] = rabi
    extra[im, nl] = -rabi
    extra[re, re] = -gamma
    extra[im, im] = -gamma
    blocks = sparse.block_diag([dl * chain_matrix(nl), dr * chain_matrix(nr), sparse.csr_matrix((2, 2))])
    return (blocks + extra).tocsr()


def _time_unit(p: ModelParams) -> float:
    """Seconds per reported time unit: T_R, or plain seconds when there is no drive."""
    return p.rabi_period if p.rabi > 0 else 1.0


def reduced_rhs(state: ReducedState, spec: GeneratorSpec) -> ReducedState:
    y = reduced_generator_matrix(spec) @ state.to_vector()
    return ReducedState.from_vector(y, spec.params.n_left)


def integrate_reduced(
    state0: ReducedState,
    spec: GeneratorSpec,
    t_grid: np.ndarray,
    *,
    rtol: float = 1e-9,
    atol: float = 1e-12,
) -> SeriesResult:
    """Integrate the reduced equation; ``t_grid`` in seconds."""
    t_grid = np.asarray(t_grid, dtype=float)
    p = spec.params
    gen = reduced_generator_matrix(spec)
    t0 = 0.0 if t_grid[0] > 0 else float(t_grid[0])
    sol = solve_ivp(
        lambda t, y: gen @ y,
        (t0, float(t_grid[-1])),
        state0.to_vector(),
        method="DOP853",
        t_eval=t_grid,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise RuntimeError(f"reduced master integration failed: {sol.message}")
    y = sol.y.T
    nl, nr = p.n_left, p.n_right
    pops = y[:, : nl + nr]
    t_r = _time_unit(p)
    return SeriesResult(
        t_tr=t_grid / t_r,
        p_left=pops[:, :nl].sum(axis=1),
        populations=pops,
        n_left=nl,
        coherence=-2.0 * y[:, -1],
        label="reduced-master",
        meta={"mode": spec.mode.value, "nfev": int(sol.nfev), "coherence_re": y[:, -2]},
    )


def second_order_pl_residual(series: SeriesResult, spec: GeneratorSpec, *, max_step: float = 0.05) -> np.ndarray:
    """Residual of P_L'' + D P_L' + 2 Omega^2 (p_1L - p_1R) on interior samples.

    Derivatives are central differences in seconds.  Refuses grids that are
    non-uniform or whose step exceeds ``max_step`` divided by the fastest rate.
    """
    if series.populations is None or series.n_left is None:
        raise GridError("series must carry level populations")
    p = spec.params
    t = series.t_tr * _time_unit(p)
    if t.size < 3:
        raise GridError("need at least three samples")
    dt = np.diff(t)
    h = float(dt.mean())
    if np.max(np.abs(dt - h)) > 1e-9 * h:
        raise GridError("grid must be uniform")
    fastest = max(p.diffusion_left, p.diffusion_right, spec.rabi)
    if h * fastest > max_step:
        raise GridError(f"grid step {h:.3g}s too coarse for rates up to {fastest:.3g}/s")
    pl = series.p_left
    first = (pl[2:] - pl[:-2]) / (2 * h)
    second = (pl[2:] - 2 * pl[1:-1] + pl[:-2]) / h**2
    nl = series.n_left
    diff = series.populations[1:-1, 0] - series.populations[1:-1, nl]
    return second + p.diffusion * first + 2.0 * spec.rabi**2 * diff


def dominant_frequency(t: np.ndarray, signal: np.ndarray) -> tuple[float, float]:
    """Signed angular frequency of the strongest Fourier component of a uniform series.

    Uses the convention ``signal ~ exp(+i w t)``.  Returns ``(w, resolution)``.
    """
    t = np.asarray(t, dtype=float)
    h = float(t[1] - t[0])
    x = np.asarray(signal) - np.mean(signal)
    spectrum = np.fft.fft(x * np.hanning(x.size))
    freqs = 2.0 * np.pi * np.fft.fftfreq(x.size, d=h)
    k = int(np.argmax(np.abs(spectrum)))
    return float(freqs[k]), float(2.0 * np.pi / (h * x.size))
