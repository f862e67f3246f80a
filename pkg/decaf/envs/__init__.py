from decaf.envs._biaseddm import BiasedDMEnvironment  # noqa: F401
from decaf.envs._job import JobEnvironment  # noqa: F401
from decaf.envs._joballoc import JobAllocEnvironment  # noqa: F401
from decaf.envs._matthew import MatthewEnvironment  # noqa: F401
from decaf.envs._plant import PlantEnvironment  # noqa: F401
from decaf.envs.base import BaseEnvironment, EnvKind, EnvSpec, StepOutcome  # noqa: F401
from decaf.exceptions import ConfigError

ENVIRONMENTS = {
    EnvKind.MATTHEW: MatthewEnvironment,
    EnvKind.JOB: JobEnvironment,
    EnvKind.JOBALLOC: JobAllocEnvironment,
    EnvKind.PLANT: PlantEnvironment,
    EnvKind.BIASEDDM: BiasedDMEnvironment,
}


def make_env(kind, **overrides):
    """Builds an environment by kind ("matthew", "job", ...), with its constants optionally overridden."""
    kind = EnvKind.parse(kind)
    try:
        return ENVIRONMENTS[kind](**overrides)
    except TypeError as e:
        raise ConfigError(f"Bad {kind.value} environment settings: {e}") from e
