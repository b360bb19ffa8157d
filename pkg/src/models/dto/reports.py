from typing import Dict, List, Optional

from pydantic import BaseModel, Field


# ----- Proposition checks -----
class ImprovementTrial(BaseModel):
    trial: int
    kind: str
    j_original: float
    j_tilted: float
    margin: float
    min_expected_advantage: float
    ok: bool


class ImprovementReport(BaseModel):
    kind: str
    trials: int
    violations: int
    min_margin: float
    min_expected_advantage: float
    failures: List[ImprovementTrial] = Field(default_factory=list)


class IdentityReport(BaseModel):
    instances: int
    max_abs_difference: float
    violations: int
    tolerance: float


# ----- Motivating example -----
class BranchSummary(BaseModel):
    branch: str
    first_action: str
    cumulative_reward: float
    cumulative_advantage: float
    base_mass: float
    reward_tilted_mass: float
    advantage_tilted_mass: float
    exact_return: float


class MyopiaReport(BaseModel):
    horizon: int
    branches: List[BranchSummary]
    reward_tilt_prefers: str
    advantage_tilt_prefers: str
    optimal_branch: str


class ExampleReport(BaseModel):
    backups: int
    gamma: float
    advantage_s1_a1: float
    advantage_s1_a2: float
    max_abs_advantage_elsewhere: float
    reference_value_matches: bool
    zero_claim_too_broad: bool
    j_original: float
    j_exp_tilted: float
    j_sigmoid_tilted: float
    advantages: Dict[str, List[float]]
    myopia: MyopiaReport


# ----- Full suite -----
class VerifyReport(BaseModel):
    passed: bool
    example: ExampleReport
    improvement: List[ImprovementReport]
    identity: IdentityReport
    runtime_seconds: Optional[float] = None

    @property
    def proposition_violations(self) -> int:
        return sum(r.violations for r in self.improvement)


# ----- Guide comparison -----
class CollapseCheck(BaseModel):
    final_return: float
    best_return: float
    best_iteration: int
    best_stderr: float
    n_stderr: float
    collapsed: bool


class SeedComparison(BaseModel):
    seed: int
    final_returns: Dict[str, float]
    paired_differences: Dict[str, float]
    collapse: Dict[str, CollapseCheck]


class EnvComparison(BaseModel):
    env: str
    seeds: List[int]
    per_seed: List[SeedComparison]
    mean_difference: Dict[str, float]
    stderr_difference: Dict[str, Optional[float]]
    not_worse: Dict[str, bool]
    collapsed_runs: Dict[str, int]


class ComparisonReport(BaseModel):
    baseline: str
    kinds: List[str]
    real_steps: int
    envs: List[EnvComparison]
    passed: bool
    runtime_seconds: float
