"""
Noise schedule constants.

All arrays are indexed by diffusion step ``i`` in 0..N; entry 0 is the
clean-data convention (beta_0 = 0, alpha_bar_0 = 1).
"""
from dataclasses import dataclass

import numpy as np

from src.common.exceptions import ShapeError

REFERENCE_STEPS = 1000
MAX_BETA = 0.5


@dataclass(frozen=True)
class DiffusionSchedule:
    betas: np.ndarray

    def __post_init__(self) -> None:
        betas = np.asarray(self.betas, dtype=np.float64).reshape(-1)
        if betas.size < 2:
            raise ShapeError("a schedule needs at least 2 steps")
        if not (np.all(betas > 0) and np.all(betas < 1) and np.all(np.diff(betas) > 0)):
            raise ShapeError("betas must be strictly increasing inside (0, 1)")
        object.__setattr__(self, "betas", betas)

    @classmethod
    def linear(cls, n_steps: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> "DiffusionSchedule":
        """
        Linear betas whose endpoints are quoted for a 1000-step chain and
        rescaled by 1000 / n_steps, so that alpha_bar_N stays near zero for
        short chains. The scale is capped so no beta exceeds 0.5.
        """
        if n_steps < 2:
            raise ShapeError(f"n_steps must be >= 2, got {n_steps}")
        scale = min(REFERENCE_STEPS / n_steps, MAX_BETA / beta_end)
        return cls(np.linspace(beta_start * scale, beta_end * scale, n_steps))

    @property
    def n_steps(self) -> int:
        return self.betas.size

    @property
    def beta(self) -> np.ndarray:
        return np.concatenate([[0.0], self.betas])

    @property
    def alpha(self) -> np.ndarray:
        return 1.0 - self.beta

    @property
    def alpha_bar(self) -> np.ndarray:
        return np.cumprod(self.alpha)

    @property
    def posterior_variance(self) -> np.ndarray:
        """beta_tilde_i = beta_i (1 - alpha_bar_{i-1}) / (1 - alpha_bar_i); zero at i = 0 and i = 1."""
        ab = self.alpha_bar
        var = np.zeros(self.n_steps + 1)
        var[1:] = self.beta[1:] * (1.0 - ab[:-1]) / (1.0 - ab[1:])
        return var

    @property
    def guidance_variance(self) -> np.ndarray:
        """Posterior variance with step 1 lifted to step 2's value so every shift is nonzero."""
        var = self.posterior_variance.copy()
        var[1] = var[2]
        return var

    def check_step(self, i: int) -> None:
        if not (1 <= i <= self.n_steps):
            raise ShapeError(f"diffusion step {i} outside 1..{self.n_steps}")

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {"schedule.betas": self.betas.copy()}

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "DiffusionSchedule":
        return cls(arrays["schedule.betas"])
