import numpy as np
import pytest

from ktb.catalog import parse_task_id
from ktb.episode import EpisodeMetadata, EpisodeRecord

TASK = "mon-hum-neu"


def synthetic_episode(rng: np.random.Generator, length: int,
                      task_id: str = TASK, episode_id: str = "ep") -> EpisodeRecord:
    """Random but compressible episode: a repeated dungeon-ish base screen
    with a few mutated cells per step."""
    base = np.full((24, 80), ord("."), dtype=np.uint8)
    base[0, :] = ord("#")
    base[-1, :] = ord("#")
    chars = np.repeat(base[None], length, axis=0)
    colors = np.zeros((length, 24, 80), dtype=np.int8)
    colors[:, 0, :] = 7
    for t in range(length):
        for _ in range(4):
            r = int(rng.integers(0, 24))
            c = int(rng.integers(0, 80))
            chars[t, r, c] = int(rng.integers(33, 127))
            colors[t, r, c] = int(rng.integers(0, 16))
    cursor = np.stack([rng.integers(0, 24, length), rng.integers(0, 80, length)],
                      axis=1).astype(np.int16)
    actions = rng.integers(0, 121, length).astype(np.uint8)
    rewards = rng.integers(-3, 50, length).astype(np.int32)
    dones = np.zeros(length, dtype=np.uint8)
    dones[-1] = 1
    meta = EpisodeMetadata(
        character=parse_task_id(task_id),
        final_score=int(np.abs(rewards).sum()),
        death_level=int(rng.integers(1, 6)),
        turns=length,
        episode_id=episode_id,
    )
    return EpisodeRecord(tty_chars=chars, tty_colors=colors, tty_cursor=cursor,
                         actions=actions, rewards=rewards, dones=dones, metadata=meta)


def synthetic_episodes(seed: int, count: int, min_len: int = 3,
                       max_len: int = 40) -> list[EpisodeRecord]:
    rng = np.random.default_rng(seed)
    return [synthetic_episode(rng, int(rng.integers(min_len, max_len + 1)),
                              episode_id=f"syn-{seed}-{i}")
            for i in range(count)]


@pytest.fixture(scope="session")
def small_store(tmp_path_factory):
    """5 short episodes, deflate codec."""
    from ktb.store import write_store
    path = tmp_path_factory.mktemp("stores") / "small.ktb"
    write_store(path, synthetic_episodes(seed=7, count=5, min_len=4, max_len=20))
    return str(path)


@pytest.fixture(scope="session")
def gridhack_store(tmp_path_factory):
    """20 scripted GridHack episodes, aligned and stored."""
    from ktb.envadapter import GridHack, record_episode, scripted_policy
    from ktb.repack import align_episode
    from ktb.store import write_store

    env = GridHack()
    episodes = [
        align_episode(record_episode(env, scripted_policy, seed=s,
                                     task_id=TASK, episode_id=f"gh-{s}"))
        for s in range(20)
    ]
    path = tmp_path_factory.mktemp("stores") / "gridhack.ktb"
    write_store(path, episodes)
    return str(path)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


def pytest_addoption(parser):
    parser.addoption("--skip-slow", action="store_true",
                     help="skip the multi-minute benchmark tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-minute benchmark tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--skip-slow"):
        marker = pytest.mark.skip(reason="--skip-slow")
        for item in items:
            if "slow" in item.keywords:
                item.add_marker(marker)
