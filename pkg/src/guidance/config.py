from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator


class GuideKind(str, Enum):
    NONE = "none"
    SAG = "sag"
    EAG = "eag"
    REWARD = "reward"
    POLICY_ONLY = "policy-only"


DEFAULT_ALPHA: dict[GuideKind, float] = {
    GuideKind.NONE: 0.0,
    GuideKind.SAG: 0.5,
    GuideKind.EAG: 0.1,
    GuideKind.REWARD: 0.1,
    GuideKind.POLICY_ONLY: 0.1,
}


class GuidanceConfig(BaseModel):
    """
    Guide selection for the sampler. ``alpha`` left unset resolves to the
    per-kind default.
    """

    model_config = ConfigDict(extra="forbid")

    kind: GuideKind = GuideKind.NONE
    alpha: float | None = Field(default=None, ge=0, allow_inf_nan=False)
    apply_to_actions: bool = False
    clip: float = Field(default=10.0, gt=0, allow_inf_nan=False)
    couple_strength: float = Field(default=1.0, ge=0, allow_inf_nan=False)
    center: bool = False
    n_mc: int = Field(default=8, ge=1)

    @model_validator(mode="after")
    def _resolve_alpha(self) -> "GuidanceConfig":
        if self.alpha is None:
            self.alpha = DEFAULT_ALPHA[self.kind]
        return self

    @property
    def scale(self) -> float:
        return float(self.alpha or 0.0)
