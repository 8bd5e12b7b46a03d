import dataclasses
import logging
import time
from typing import Dict, List, Tuple

import numpy as np
from tqdm.auto import tqdm

from ..energy.problem import TERMS, FittingProblem, SequenceParams
from ..energy.terms import annealing_weights
from .adam import AdamState, adam_step
from .schedule import StageConfig

logger = logging.getLogger(__name__)


class ExecutionTimeException(Exception):
    def __init__(self, message):
        super().__init__(message)


class NonFiniteEnergy(ArithmeticError):
    """Energy or gradient became NaN/inf; names the first offending term and frame."""

    def __init__(self, message, stage: str = "", term: str = "", frame: int = -1, iteration: int = -1):
        super().__init__(message)
        self.stage = stage
        self.term = term
        self.frame = frame
        self.iteration = iteration


@dataclasses.dataclass(frozen=True)
class TraceRow:
    """
    Energies after one iteration of a stage (iteration 0 is the starting point).
    Terms are unweighted sums over the sequence except the joint term, which carries the
    annealing weights of the current outer iteration; total is the objective being minimized.
    """

    stage: str
    iteration: int
    energies: Dict[str, float]

    def to_dict(self) -> Dict:
        return {"stage": self.stage, "iteration": self.iteration, **{name: self.energies[name] for name in TRACE_COLUMNS}}


TRACE_COLUMNS = TERMS + ("total",)


@dataclasses.dataclass
class StageResult:
    """
    Outcome of one stage.

    Attributes
    ----------
    params : SequenceParams
        parameters after the stage
    trace : List[TraceRow]
        energy per iteration
    flagged : bool
        the final energy exceeds the starting energy
    energy_start, energy_end : float
        total energy of the starting and final parameters under the stage's last
        annealing weights, contact correspondences taken at each parameter set
    """

    params: SequenceParams
    trace: List[TraceRow]
    flagged: bool = False
    energy_start: float = np.nan
    energy_end: float = np.nan


class StageRunner:
    def __init__(self, problem: FittingProblem, config: StageConfig, progress: bool = False):
        """
        Run one stage of Adam over the free parameter blocks.

        Parameters
        ----------
        problem : FittingProblem
            objective of the sequence, its weights are replaced by the stage's
        config : StageConfig
            the stage
        progress : bool
            show a tqdm progress bar
        """
        self.problem = problem
        self.config = config
        self.progress = progress
        self.free = config.free_set
        self.time_limit = config.time_limit
        self.start_time: float = 0.0

    def keep_running(self):
        """
        Check the wall-clock limit of the stage.

        Raises
        ------
        ExecutionTimeException
            if the stage took longer than its time limit
        """
        if time.time() - self.start_time >= self.time_limit:
            raise ExecutionTimeException(
                f"stage {self.config.name!r} took longer than {self.time_limit} seconds, aborting!"
            )

    def learning_rates(self, params: SequenceParams) -> np.ndarray:
        """Per-component step sizes in pack order, the log scale gets its own."""
        rates = np.full(len(self.problem.pack(params, self.free)), self.config.learning_rate)
        if self.free.scale:
            rates[-1] = self.config.scale_learning_rate
        return rates

    def record(self, params: SequenceParams, iteration: int) -> TraceRow:
        energies = self.problem.terms(params)
        if not np.isfinite(energies["total"]):
            self.fail(params, iteration)
        return TraceRow(self.config.name, iteration, energies)

    def fail(self, params: SequenceParams, iteration: int):
        """Raise NonFiniteEnergy naming the first term and frame that is not finite."""
        term, frame = "gradient", -1
        for name, values in self.problem.frame_terms(params).items():
            bad = np.flatnonzero(~np.isfinite(values))
            if len(bad):
                # temporal entries are indexed by their center frame
                term, frame = name, int(bad[0]) + (1 if name == "temporal" else 0)
                break
        raise NonFiniteEnergy(
            f"non-finite {term} energy at frame {frame} in stage {self.config.name!r}, iteration {iteration}",
            stage=self.config.name,
            term=term,
            frame=frame,
            iteration=iteration,
        )

    def run(self, params: SequenceParams) -> StageResult:
        """
        Optimize the free blocks; frozen blocks are passed through untouched.

        Parameters
        ----------
        params : SequenceParams
            starting parameters

        Returns
        -------
        StageResult
            final parameters and energy trace

        Raises
        ------
        NonFiniteEnergy
            if the energy or its gradient stops being finite
        ExecutionTimeException
            if the stage exceeds its time limit
        """
        self.start_time = time.time()
        self.problem.weights = self.config.weights(self.problem.weights)
        self.problem.set_joint_weights(annealing_weights(self.problem.skeleton, self.config.limb_weight(0)))
        self.problem.refresh_correspondences(params)
        trace = [self.record(params, 0)]
        if not self.free or self.config.iterations == 0:
            total = trace[0].energies["total"]
            return StageResult(params, trace, energy_start=total, energy_end=total)
        initial = params

        logger.info("stage %s: start energy %.6g, blocks %s", self.config.name, trace[0].energies["total"], self.free.names())
        flat = self.problem.pack(params, self.free)
        rates = self.learning_rates(params)
        iteration = 0
        with tqdm(total=self.config.iterations, desc=self.config.name, disable=not self.progress) as bar:
            for outer in range(self.config.outer_iterations):
                self.problem.set_joint_weights(
                    annealing_weights(self.problem.skeleton, self.config.limb_weight(outer))
                )
                self.problem.refresh_correspondences(params)
                # moments restart with every correspondence refresh
                state = AdamState.zeros(len(flat))
                for _ in range(self.config.inner_iterations):
                    self.keep_running()
                    value, grads = self.problem.value_and_gradient(params, self.free)
                    if not (np.isfinite(value) and np.all(np.isfinite(grads))):
                        self.fail(params, iteration)
                    flat, state = adam_step(flat, grads, state, rates * self.config.lr_decay**iteration)
                    params = self.problem.unpack(flat, self.free, params)
                    iteration += 1
                    trace.append(self.record(params, iteration))
                    bar.update(1)
                logger.debug(
                    "stage %s: outer iteration %d, energy %.6g",
                    self.config.name,
                    outer,
                    trace[-1].energies["total"],
                )

        energy_start, energy_end = self.compare(initial, params)
        flagged = energy_end > energy_start
        if flagged:
            logger.warning("stage %s: energy increased from %.6g to %.6g", self.config.name, energy_start, energy_end)
        logger.info("stage %s: end energy %.6g", self.config.name, energy_end)
        return StageResult(params, trace, flagged, energy_start, energy_end)

    def compare(self, initial: SequenceParams, final: SequenceParams) -> Tuple[float, float]:
        """
        Total energy of the starting and final parameters under the final annealing weights.
        Correspondences are refreshed at each, the problem is left at the final ones.
        """
        self.problem.refresh_correspondences(initial)
        start = self.problem.energy(initial)
        self.problem.refresh_correspondences(final)
        return start, self.problem.energy(final)


def run_stage(
    problem: FittingProblem, params: SequenceParams, config: StageConfig, progress: bool = False
) -> StageResult:
    """
    Run one stage of the schedule.

    Parameters
    ----------
    problem : FittingProblem
        objective of the sequence
    params : SequenceParams
        starting parameters
    config : StageConfig
        the stage
    progress : bool
        show a progress bar

    Returns
    -------
    StageResult
        final parameters and energy trace
    """
    return StageRunner(problem, config, progress).run(params)
