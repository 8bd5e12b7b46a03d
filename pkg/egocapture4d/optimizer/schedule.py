"""
Stage schedules of the sequence fit: which terms are on, which parameter
blocks move and how long each stage runs.
"""

import dataclasses
from typing import Dict, List, Optional, Sequence, Tuple

from ..core.body import DEFAULT_CONTACT_GROUPS
from ..core.scale_mode import ScaleMode
from ..energy.terms import FreeSet, KernelSet, Weights

TIME_LIMIT = float("inf")

ABLATIONS = ("E_M", "E_M+E_C", "E_M+E_T", "full")


@dataclasses.dataclass(frozen=True)
class StageConfig:
    """
    One optimization stage.

    Attributes
    ----------
    name : str
        stage label used in traces and logs
    lambda_contact : float
        weight of the scene contact term
    lambda_temporal : float
        weight of the zero-acceleration prior
    free : Tuple[str, ...]
        parameter blocks the stage moves, see FreeSet.BLOCKS
    outer_iterations : int
        contact correspondences are refreshed before each outer iteration
    inner_iterations : int
        Adam steps per outer iteration
    learning_rate : float
        step size of every block but the scale
    scale_learning_rate : float
        step size of the log scale
    lr_decay : float
        multiplicative step size decay applied after every step
    annealing : Tuple[float, ...]
        limb weight of the joint term per outer iteration, the last value repeats
    consolidate_shape : bool
        replace every frame's shape by the sequence median before the stage
    time_limit : float
        wall-clock limit in seconds
    """

    name: str
    lambda_contact: float = 0.0
    lambda_temporal: float = 0.0
    free: Tuple[str, ...] = ("theta", "gamma")
    outer_iterations: int = 1
    inner_iterations: int = 100
    learning_rate: float = 0.005
    scale_learning_rate: float = 0.01
    lr_decay: float = 1.0
    annealing: Tuple[float, ...] = (1.0,)
    consolidate_shape: bool = False
    time_limit: float = TIME_LIMIT

    def __post_init__(self):
        object.__setattr__(self, "free", tuple(self.free))
        object.__setattr__(self, "annealing", tuple(float(value) for value in self.annealing))
        FreeSet.of(self.free)
        if self.outer_iterations < 0 or self.inner_iterations < 0:
            raise ValueError(f"stage {self.name!r}: iteration counts must be non-negative")
        if not (self.learning_rate > 0.0 and self.scale_learning_rate > 0.0):
            raise ValueError(f"stage {self.name!r}: learning rates must be positive")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError(f"stage {self.name!r}: lr_decay must lie in (0, 1], got {self.lr_decay}")
        if not self.annealing:
            raise ValueError(f"stage {self.name!r}: annealing needs at least one limb weight")
        if self.time_limit <= 0.0:
            raise ValueError(f"stage {self.name!r}: time_limit must be positive")

    @property
    def free_set(self) -> FreeSet:
        return FreeSet.of(self.free)

    @property
    def iterations(self) -> int:
        return self.outer_iterations * self.inner_iterations

    def limb_weight(self, outer: int) -> float:
        return self.annealing[min(outer, len(self.annealing) - 1)]

    def weights(self, base: Weights) -> Weights:
        return dataclasses.replace(base, lambda_contact=self.lambda_contact, lambda_temporal=self.lambda_temporal)

    def to_dict(self) -> Dict:
        data = dataclasses.asdict(self)
        data["free"] = list(self.free)
        data["annealing"] = list(self.annealing)
        return data


def fit_2d_stage(**overrides) -> StageConfig:
    """Per-frame fit to the 2D joints with limb annealing; shape, pose and root free."""
    options = dict(
        name="fit_2d",
        free=("beta", "theta", "gamma"),
        outer_iterations=3,
        inner_iterations=100,
        learning_rate=0.01,
        annealing=(0.0, 0.5, 1.0),
    )
    options.update(overrides)
    return StageConfig(**options)


def scale_stage(**overrides) -> StageConfig:
    """Scene contact on, camera trajectory frozen, scale free."""
    options = dict(
        name="scale_contact",
        lambda_contact=0.1,
        free=("theta", "gamma", "scale"),
        outer_iterations=8,
        inner_iterations=25,
        scale_learning_rate=0.05,
        lr_decay=0.99,
        consolidate_shape=True,
    )
    options.update(overrides)
    return StageConfig(**options)


def temporal_stage(**overrides) -> StageConfig:
    """Contact and temporal prior on, camera trajectory refined together with the body."""
    options = dict(
        name="temporal",
        lambda_contact=0.1,
        lambda_temporal=0.1,
        free=("theta", "gamma", "camera", "scale"),
        outer_iterations=8,
        inner_iterations=25,
        consolidate_shape=True,
    )
    options.update(overrides)
    return StageConfig(**options)


@dataclasses.dataclass(frozen=True)
class StageSchedule:
    stages: Tuple[StageConfig, ...]

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))

    def __len__(self) -> int:
        return len(self.stages)

    def __iter__(self):
        return iter(self.stages)

    def __getitem__(self, index: int) -> StageConfig:
        return self.stages[index]

    @classmethod
    def default(cls) -> "StageSchedule":
        return cls((fit_2d_stage(), scale_stage(), temporal_stage()))

    @classmethod
    def ablation(cls, name: str, base: Optional["StageSchedule"] = None) -> "StageSchedule":
        """
        Schedule of one ablation variant, derived from a three-stage base schedule.

        Parameters
        ----------
        name : str
            one of E_M, E_M+E_C, E_M+E_T, full
        base : Optional[StageSchedule]
            three-stage schedule to derive from, the default one if None

        Returns
        -------
        StageSchedule
            the variant
        """
        base = base or cls.default()
        if len(base) != 3:
            raise ValueError(f"ablations are derived from a three-stage schedule, got {len(base)} stages")
        fit_2d, scale, temporal = base.stages
        if name == "E_M":
            return cls((fit_2d,))
        if name == "E_M+E_C":
            return cls((fit_2d, scale))
        if name == "E_M+E_T":
            # without contact the scale is unobservable, so it stays frozen
            free = tuple(block for block in temporal.free if block != "scale")
            return cls((fit_2d, dataclasses.replace(temporal, lambda_contact=0.0, free=free)))
        if name == "full":
            return base
        raise ValueError(f"unknown ablation {name!r}, expected one of {ABLATIONS}")


@dataclasses.dataclass(frozen=True)
class FitSettings:
    """
    Settings of a sequence fit shared by every stage.

    Attributes
    ----------
    weights : Weights
        prior weights (the contact and temporal weights come from the stages)
    kernels : KernelSet
        robust kernels
    contact_groups : Tuple[str, ...]
        active contact candidate groups
    scale_mode : str
        see ScaleMode
    twist_weight : float
        pose prior weight of knee and elbow twist
    yaw_candidates : int
        root orientations tried per frame during initialization
    default_depth : float
        initial root depth when no torso bone is visible
    progress : bool
        show tqdm progress bars
    """

    weights: Weights = Weights()
    kernels: KernelSet = KernelSet()
    contact_groups: Tuple[str, ...] = DEFAULT_CONTACT_GROUPS
    scale_mode: str = ScaleMode.camera
    twist_weight: float = 4.0
    yaw_candidates: int = 12
    default_depth: float = 3.0
    progress: bool = False

    def __post_init__(self):
        object.__setattr__(self, "contact_groups", tuple(self.contact_groups))
        if self.scale_mode not in ScaleMode.values():
            raise ValueError(f"unknown scale mode {self.scale_mode!r}, expected one of {ScaleMode.values()}")
        if self.yaw_candidates < 1:
            raise ValueError("yaw_candidates must be at least 1")
        if not self.default_depth > 0.0:
            raise ValueError("default_depth must be positive")


def stages_from_dicts(entries: Sequence[Dict]) -> List[StageConfig]:
    return [StageConfig(**entry) for entry in entries]
