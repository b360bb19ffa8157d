from pydantic import BaseModel, ConfigDict, Field


class AgentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hidden: tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    policy_lr: float = Field(default=3e-4, gt=0)
    critic_lr: float = Field(default=1e-3, gt=0)
    advantage_lr: float = Field(default=1e-3, gt=0)
    reward_lr: float = Field(default=1e-3, gt=0)
    gamma: float = Field(default=0.99, gt=0, le=1)
    lam: float = Field(default=0.95, ge=0, le=1)
    entropy_coef: float = Field(default=0.01, ge=0)
    critic_coef: float = Field(default=0.5, gt=0)
    init_log_std: float = -0.5
    squash: bool = True
    n_mc: int = Field(default=8, ge=1)
