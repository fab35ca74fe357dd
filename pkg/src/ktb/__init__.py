"""Sequential decision-data engine and offline-RL benchmark toolkit:
chunked compressed trajectory stores, three-mode data loaders, a TTY
rasterizer, recurrent offline RL baselines, and reliability-aware
evaluation statistics."""

__version__ = "0.1.0"

from . import catalog, episode, evalstats, loaders, repack, store, ttyrender  # noqa: F401
