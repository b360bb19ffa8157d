from pydantic import BaseModel, ConfigDict, Field


class DiffusionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_steps: int = Field(default=100, ge=2)
    beta_start: float = Field(default=1e-4, gt=0, lt=1)
    beta_end: float = Field(default=0.02, gt=0, lt=1)
    hidden: tuple[int, ...] = (256, 256)
    activation: str = "silu"
    embedding_dim: int = Field(default=16, ge=2)
    lr: float = Field(default=1e-3, gt=0)
    batch_size: int = Field(default=64, ge=1)
    epochs: int = Field(default=5, ge=0)
