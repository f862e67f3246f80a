from decaf.allocator import AllocationProblem, AllocationResult, solve, solve_exhaustive  # noqa: F401
from decaf.envs import BaseEnvironment, EnvKind, make_env  # noqa: F401
from decaf.exceptions import DecafError  # noqa: F401
from decaf.fairness import FairnessKind, FairnessSpec, PayoffTracker, decompose_reward, fairness_value  # noqa: F401
from decaf.learner import Estimators, LearnerConfig, LearnerMode, evaluate_policy, run_training  # noqa: F401
from decaf.types import CandidateAction, CandidateSet, JointAllocation, ResourceCapacities  # noqa: F401
from decaf.valuenet import NetConfig, ValueNet, read_checkpoint, write_checkpoint  # noqa: F401
