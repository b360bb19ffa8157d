"""
Denoising diffusion over flattened trajectory segments.

Everything here works in normalized units. Diffused coordinates ``x`` are
(B, D) with D = (H + 1) * ds + H; the action block ``cond`` (B, H * da) is
never noised and conditions the noise predictor.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from src.common.decorators import skip_non_finite
from src.common.exceptions import NonFiniteError, SamplingError, ShapeError
from src.core.config import settings
from src.numerics.nn import FeedForwardNet
from src.numerics.optim import Adam
from src.numerics.tensor import Tensor, concat, square, tmean, tsum
from src.worldmodel.config import DiffusionConfig
from src.worldmodel.normalizer import Normalizer
from src.worldmodel.schedule import DiffusionSchedule
from src.worldmodel.segment import SegmentBatch, SegmentLayout

logger = logging.getLogger(__name__)

# (mean, cond, i, rng) -> (shift of the mean, shift of cond or None)
Guide = Callable[[np.ndarray, np.ndarray, int, np.random.Generator], tuple[np.ndarray, np.ndarray | None]]
# (x, cond, i, rng) -> new cond
Coupler = Callable[[np.ndarray, np.ndarray, int, np.random.Generator], np.ndarray]


class NoisePredictor:
    """eps_theta(x_i, cond, i): MLP over [x_i, cond, embed(i)] with a zero-initialized output layer."""

    def __init__(
        self,
        layout: SegmentLayout,
        hidden: Sequence[int],
        rng: np.random.Generator,
        activation: str = "silu",
        embedding_dim: int = 16,
    ):
        self.layout = layout
        self.net = FeedForwardNet(
            layout.diffused_dim + layout.condition_dim,
            hidden,
            layout.diffused_dim,
            rng,
            activation=activation,
            zero_last=True,
            step_embedding_dim=embedding_dim,
        )

    def forward(self, x, cond, steps) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 2 or x.shape[1] != self.layout.diffused_dim:
            raise ShapeError(f"expected diffused input (batch, {self.layout.diffused_dim}), got {x.shape}")
        return self.net(concat([x, Tensor(cond)], axis=1), steps)

    __call__ = forward

    def predict(self, x: np.ndarray, cond: np.ndarray, steps) -> np.ndarray:
        return self.forward(x, cond, steps).data

    def named_parameters(self) -> dict[str, Tensor]:
        return self.net.named_parameters()

    def parameters(self) -> list[Tensor]:
        return self.net.parameters()


# ----------------------------------------------------------------------
# Forward process and training
# ----------------------------------------------------------------------

def forward_noise(x0: np.ndarray, i, eps: np.ndarray, schedule: DiffusionSchedule) -> np.ndarray:
    """
    Closed-form jump x_i = sqrt(ab_i) x_0 + sqrt(1 - ab_i) eps.

    ``i`` is a scalar or one step per row; step 0 returns ``x0`` unchanged.
    """
    steps = np.asarray(i)
    if np.any(steps < 0) or np.any(steps > schedule.n_steps):
        raise ShapeError(f"diffusion step outside 0..{schedule.n_steps}")
    if eps.shape != x0.shape:
        raise ShapeError(f"noise shape {eps.shape} does not match data shape {x0.shape}")
    ab = schedule.alpha_bar[steps]
    if ab.ndim == 1:
        ab = ab[:, None]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def noise_prediction_loss(
    predictor: NoisePredictor,
    x0: np.ndarray,
    cond: np.ndarray,
    steps: np.ndarray,
    eps: np.ndarray,
    schedule: DiffusionSchedule,
) -> Tensor:
    """Mean over the batch of the summed squared error between eps and eps_theta(x_i, i)."""
    x_i = forward_noise(x0, steps, eps, schedule)
    residual = predictor(x_i, cond, steps) - Tensor(eps)
    return tmean(tsum(square(residual), axis=1))


@skip_non_finite("diffusion step")
def train_step(
    batch: SegmentBatch,
    predictor: NoisePredictor,
    schedule: DiffusionSchedule,
    optimizer: Adam,
    rng: np.random.Generator,
    steps: np.ndarray | None = None,
    noise: np.ndarray | None = None,
) -> float | None:
    """
    One Adam step on a normalized batch. ``steps`` and ``noise`` default to
    fresh draws i ~ U{1..N} and eps ~ N(0, I) per segment.
    """
    if len(batch) == 0:
        raise ShapeError("train_step needs a nonempty batch")
    x0, cond = predictor.layout.flatten(batch)
    if steps is None:
        steps = rng.integers(1, schedule.n_steps + 1, size=x0.shape[0])
    if noise is None:
        noise = rng.standard_normal(x0.shape)
    optimizer.zero_grad()
    loss = noise_prediction_loss(predictor, x0, cond, steps, noise, schedule)
    loss.backward()
    return loss.item() if optimizer.step() else None


# ----------------------------------------------------------------------
# Reverse process
# ----------------------------------------------------------------------

def reverse_mean(
    predictor: NoisePredictor,
    x_i: np.ndarray,
    cond: np.ndarray,
    i: int,
    schedule: DiffusionSchedule,
) -> np.ndarray:
    """mu = (x_i - beta_i / sqrt(1 - ab_i) * eps_theta(x_i, i)) / sqrt(alpha_i)."""
    schedule.check_step(i)
    eps = predictor.predict(x_i, cond, np.full(x_i.shape[0], i))
    beta, alpha, ab = schedule.beta[i], schedule.alpha[i], schedule.alpha_bar[i]
    return (x_i - beta / np.sqrt(1.0 - ab) * eps) / np.sqrt(alpha)


def reverse_chain(
    predictor: NoisePredictor,
    schedule: DiffusionSchedule,
    count: int,
    rng: np.random.Generator,
    start_states: np.ndarray | None = None,
    cond: np.ndarray | None = None,
    guide: Guide | None = None,
    couple: Coupler | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Run x_N ~ N(0, I) down to x_0.

    ``rng`` is split into independent noise, action and guide streams so that
    adding a guide never changes the noise a sample sees. ``start_states``
    (normalized) are inpainted into state 0 before and after every step.
    Without ``cond`` the action block starts from the action stream's normal
    draws and only ``couple`` changes it.
    """
    layout = predictor.layout
    noise_rng, action_rng, guide_rng = rng.spawn(3)
    x = noise_rng.standard_normal((count, layout.diffused_dim))
    if cond is None:
        cond = action_rng.standard_normal((count, layout.condition_dim))
    else:
        cond = np.array(cond, dtype=np.float64)
    first = layout.state_slice(0)
    variance = schedule.posterior_variance

    for i in range(schedule.n_steps, 0, -1):
        if start_states is not None:
            x[:, first] = start_states
        mean = reverse_mean(predictor, x, cond, i, schedule)
        if start_states is not None:
            mean[:, first] = start_states
        if guide is not None:
            shift, cond_shift = guide(mean, cond, i, guide_rng)
            mean = mean + shift
            if cond_shift is not None:
                cond = cond + cond_shift
        if i > 1:
            x = mean + np.sqrt(variance[i]) * noise_rng.standard_normal(mean.shape)
        else:
            x = mean
        if couple is not None:
            cond = couple(x, cond, i, action_rng)

    if start_states is not None:
        x[:, first] = start_states
    return x, cond


def sample_with_retries(
    draw: Callable[[np.ndarray, np.random.Generator], tuple[np.ndarray, np.ndarray]],
    count: int,
    layout: SegmentLayout,
    rng: np.random.Generator,
    max_retries: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Call ``draw(rows, attempt_rng)`` until every requested row is finite.

    A ``NonFiniteError`` aborts the whole attempt; otherwise only the
    non-finite rows are drawn again. Raises ``SamplingError`` once the retry
    budget is spent.
    """
    retries = settings.MAX_SAMPLE_RETRIES if max_retries is None else max_retries
    x_out = np.zeros((count, layout.diffused_dim))
    cond_out = np.zeros((count, layout.condition_dim))
    pending = np.arange(count)

    for attempt, attempt_rng in enumerate(rng.spawn(retries + 1)):
        try:
            x, cond = draw(pending, attempt_rng)
        except NonFiniteError as exc:
            logger.warning("sampling attempt %d discarded: %s", attempt, exc.message)
            continue
        ok = np.isfinite(x).all(axis=1) & np.isfinite(cond).all(axis=1)
        x_out[pending[ok]] = x[ok]
        cond_out[pending[ok]] = cond[ok]
        pending = pending[~ok]
        if pending.size == 0:
            return x_out, cond_out
        logger.warning("sampling attempt %d: %d non-finite segments discarded", attempt, pending.size)

    raise SamplingError(f"{pending.size} of {count} segments still non-finite after {retries} retries")


def ancestral_sample(
    predictor: NoisePredictor,
    schedule: DiffusionSchedule,
    count: int,
    rng: np.random.Generator,
    normalizer: Normalizer | None = None,
    start_states: np.ndarray | None = None,
    actions: np.ndarray | None = None,
    couple: Coupler | None = None,
) -> SegmentBatch:
    """
    Unguided sampling. Returns denormalized segments when a ``normalizer`` is
    given. ``start_states`` (count, ds) and ``actions`` (count, H, da) are in
    raw units.
    """
    layout = predictor.layout
    normalizer = normalizer or Normalizer.identity(layout.state_dim, layout.action_dim)
    start = None if start_states is None else normalizer.normalize_states(np.atleast_2d(start_states))
    cond = None if actions is None else normalizer.normalize_actions(np.asarray(actions)).reshape(count, -1)

    def draw(rows: np.ndarray, attempt_rng: np.random.Generator):
        return reverse_chain(
            predictor,
            schedule,
            rows.size,
            attempt_rng,
            start_states=None if start is None else start[rows],
            cond=None if cond is None else cond[rows],
            couple=couple,
        )

    x, cond_out = sample_with_retries(draw, count, layout, rng)
    batch = normalizer.denormalize(layout.unflatten(x, cond_out))
    if start_states is not None:
        batch.states[:, 0] = start_states
    return batch


# ----------------------------------------------------------------------
# Model bundle
# ----------------------------------------------------------------------

@dataclass
class DiffusionWorldModel:
    layout: SegmentLayout
    schedule: DiffusionSchedule
    predictor: NoisePredictor
    optimizer: Adam
    normalizer: Normalizer

    @classmethod
    def build(cls, layout: SegmentLayout, cfg: DiffusionConfig, rng: np.random.Generator) -> "DiffusionWorldModel":
        predictor = NoisePredictor(layout, cfg.hidden, rng, activation=cfg.activation, embedding_dim=cfg.embedding_dim)
        return cls(
            layout=layout,
            schedule=DiffusionSchedule.linear(cfg.n_steps, cfg.beta_start, cfg.beta_end),
            predictor=predictor,
            optimizer=Adam(predictor.parameters(), lr=cfg.lr),
            normalizer=Normalizer.identity(layout.state_dim, layout.action_dim),
        )

    def fit(self, batch: SegmentBatch, cfg: DiffusionConfig, rng: np.random.Generator) -> list[float]:
        """
        ``cfg.epochs`` passes over a raw-unit batch in shuffled minibatches.
        Returns the losses of the steps that were applied.
        """
        data = self.normalizer.normalize(batch)
        losses: list[float] = []
        for _ in range(cfg.epochs):
            order = rng.permutation(len(data))
            for start in range(0, len(data), cfg.batch_size):
                loss = train_step(data.select(order[start : start + cfg.batch_size]), self.predictor, self.schedule, self.optimizer, rng)
                if loss is not None:
                    losses.append(loss)
        return losses

    def sample(
        self,
        count: int,
        rng: np.random.Generator,
        start_states: np.ndarray | None = None,
        actions: np.ndarray | None = None,
    ) -> SegmentBatch:
        return ancestral_sample(
            self.predictor,
            self.schedule,
            count,
            rng,
            normalizer=self.normalizer,
            start_states=start_states,
            actions=actions,
        )

    def to_arrays(self) -> dict[str, np.ndarray]:
        arrays = {f"diffusion.{k}": v.data.copy() for k, v in self.predictor.named_parameters().items()}
        arrays.update(self.schedule.to_arrays())
        arrays.update(self.normalizer.to_arrays())
        return arrays

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.predictor.net.load_state_dict(
            {k.removeprefix("diffusion."): v for k, v in arrays.items() if k.startswith("diffusion.")}
        )
        self.schedule = DiffusionSchedule.from_arrays(arrays)
        self.normalizer = Normalizer.from_arrays(arrays)
