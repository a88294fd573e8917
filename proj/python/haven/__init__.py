"""Python access to the HAVEN training library.

The heavy lifting is in the compiled ``_haven`` extension; this package only
re-exports it and adds ``train``, a keyword-argument front end to
``run_experiment``.
"""

from ._haven import *  # noqa: F401,F403
from ._haven import TrainConfig, run_experiment


def train(out_dir, algo="haven-qmix", env="gather-then-deliver", **fields):
    """Train one run into ``out_dir`` and return its metric rows.

    Extra keyword arguments set TrainConfig fields of the same name.
    """
    config = TrainConfig()
    config.algo = algo
    config.env_id = env
    for name, value in fields.items():
        if not hasattr(config, name):
            raise AttributeError(f"TrainConfig has no field {name!r}")
        setattr(config, name, value)
    return run_experiment(config, str(out_dir))
