from typing import Optional

from pydantic import BaseModel


# ----- Training curve -----
class MetricsRow(BaseModel):
    iteration: int
    real_steps: int
    diffusion_loss: Optional[float] = None
    policy_loss: Optional[float] = None
    critic_loss: Optional[float] = None
    advantage_loss: Optional[float] = None
    reward_loss: Optional[float] = None
    entropy: Optional[float] = None
    eval_return: Optional[float] = None
    eval_stderr: Optional[float] = None
    eval_single_episode: Optional[bool] = None
    synthetic_mean_advantage: Optional[float] = None
    guide_mean_weight: Optional[float] = None
    guide_mean_grad_norm: Optional[float] = None
    guide_max_grad_norm: Optional[float] = None
    guide_zeroed_steps: Optional[int] = None


# ----- Wall clock (kept out of metrics.csv) -----
class TimingRow(BaseModel):
    iteration: int
    collect_seconds: float
    model_seconds: float
    sample_seconds: float
    update_seconds: float
    eval_seconds: float
    total_seconds: float


# ----- Evaluation -----
class EvalResult(BaseModel):
    mean: float
    stderr: float
    episodes: int
    single_episode: bool
    returns: list[float]
