"""Time series container shared by every engine."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def ladder_moments(populations_left: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean level and root second moment of the left-ladder occupation.

    Populations are normalised by the instantaneous left-ladder weight, so
    the moments describe the shape of the distribution regardless of how
    much population has moved to the other ladder.
    """
    pops = np.atleast_2d(populations_left)
    n = np.arange(1, pops.shape[-1] + 1, dtype=float)
    weight = pops.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mu = (pops @ n) / weight
        second = (pops @ (n * n)) / weight
    return mu, np.sqrt(second)


@dataclass
class SeriesResult:
    """Observables on a time grid measured in Rabi periods.

    ``p_left_err`` is the standard error of the mean for Monte Carlo
    ensembles and ``None`` for deterministic engines (or a single
    trajectory).  ``populations`` has shape ``(len(t_tr), n_left + n_right)``.
    """

    t_tr: np.ndarray
    p_left: np.ndarray
    p_left_err: np.ndarray | None = None
    populations: np.ndarray | None = None
    n_left: int | None = None
    coherence: np.ndarray | None = None
    mu_left: np.ndarray | None = None
    sigma_left: np.ndarray | None = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.t_tr = np.asarray(self.t_tr, dtype=float)
        self.p_left = np.asarray(self.p_left, dtype=float)
        if self.p_left.shape != self.t_tr.shape:
            raise ValueError("p_left must match the time grid")
        if self.populations is not None and self.n_left is not None and self.mu_left is None:
            self.mu_left, self.sigma_left = ladder_moments(self.populations[:, : self.n_left])

    @property
    def p_right(self) -> np.ndarray:
        if self.populations is not None and self.n_left is not None:
            return self.populations[:, self.n_left :].sum(axis=1)
        return 1.0 - self.p_left

    def observable(self, name: str) -> tuple[np.ndarray, np.ndarray | None]:
        """Return ``(values, stderr)`` for a named track."""
        if name == "p_left":
            return self.p_left, self.p_left_err
        if name == "p_right":
            return self.p_right, self.p_left_err
        if name in ("mu_left", "sigma_left", "coherence"):
            values = getattr(self, name)
            if values is None:
                raise KeyError(f"series has no {name} track")
            return values, None
        raise KeyError(f"unknown observable {name!r}")
