"""Task identity and the embedded 38-task benchmark catalog.

Tasks are (role, race, alignment) character combinations with a canonical
"role-race-alignment" string id. Every task carries dataset statistics and
the score anchors used for normalization; all of it is static data compiled
into this module so metadata lookups never touch the network or the datasets
themselves.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

from .errors import MalformedId, UnknownTask

ROLES = ("arc", "bar", "cav", "hea", "kni", "mon", "pri",
         "ran", "rog", "sam", "tou", "val", "wiz")
RACES = ("hum", "elf", "dwa", "gno", "orc")
ALIGNMENTS = ("neu", "law", "cha")

#: Size of the enumerated action set assumed by models and stores. The
#: challenge-environment convention; override per ModelConfig if a dataset
#: uses a different vocabulary.
DEFAULT_ACTION_VOCAB = 121

#: Terminal screen geometry shared by every observation in the benchmark.
SCREEN_ROWS = 24
SCREEN_COLS = 80


class TaskCategory(enum.Enum):
    BASE = "base"
    EXTENDED = "extended"
    COMPLETE = "complete"


@dataclass(frozen=True)
class CharacterSpec:
    role: str
    race: str
    alignment: str

    def __str__(self) -> str:
        return f"{self.role}-{self.race}-{self.alignment}"

    @property
    def task_id(self) -> str:
        return str(self)


@dataclass(frozen=True)
class TaskStats:
    transitions: int
    median_turns: float
    median_score: float
    median_deathlvl: float
    size_gb: float
    compressed_size_gb: float


@dataclass(frozen=True)
class NormalizationScores:
    min_score: float
    max_score: float
    mean_score: float


# task id -> (category, transitions, median_turns, median_score,
#             median_deathlvl, size_gb, compressed_gb,
#             min_score, max_score, mean_score)
_B = TaskCategory.BASE
_E = TaskCategory.EXTENDED
_C = TaskCategory.COMPLETE
_TABLE = {
    # Base (role-centric)
    "arc-hum-neu": (_B, 24527163, 32858.0, 4802.5, 2.0, 94.5, 1.3, 0.0, 138103.0, 6636.44),
    "bar-hum-neu": (_B, 26266771, 35716.0, 11964.0, 4.0, 101.1, 1.7, 0.0, 292342.0, 17836.68),
    "cav-hum-neu": (_B, 21674680, 30361.0, 8152.0, 4.0, 83.5, 1.3, 0.0, 258978.0, 12113.87),
    "hea-hum-neu": (_B, 14473997, 18051.0, 2043.0, 1.0, 55.7, 0.8, 0.0, 64337.0, 4068.27),
    "kni-hum-law": (_B, 22287283, 28246.0, 6305.0, 3.0, 85.8, 1.5, 0.0, 419154.0, 14137.06),
    "mon-hum-neu": (_B, 33741542, 42400.0, 11356.0, 4.0, 129.9, 2.1, 0.0, 171224.0, 17456.05),
    "pri-hum-neu": (_B, 18376473, 26796.5, 5366.5, 2.0, 70.8, 1.1, 0.0, 114269.0, 7732.69),
    "ran-hum-neu": (_B, 17625493, 25354.0, 6168.0, 2.0, 67.9, 1.0, 0.0, 54874.0, 8067.99),
    "rog-hum-cha": (_B, 14284927, 19334.0, 3005.5, 1.0, 55.0, 0.8, 0.0, 68628.0, 4818.20),
    "sam-hum-law": (_B, 22422537, 32951.0, 7850.0, 4.0, 86.3, 1.3, 0.0, 155163.0, 11009.36),
    "tou-hum-neu": (_B, 13376498, 17955.5, 2554.5, 1.0, 51.5, 0.8, 0.0, 59484.0, 4211.47),
    "val-hum-neu": (_B, 27784788, 35250.0, 11402.5, 4.0, 107.0, 1.8, 16.0, 313858.0, 18624.77),
    "wiz-hum-neu": (_B, 14343449, 19808.5, 3132.5, 1.0, 55.2, 0.8, 0.0, 71709.0, 5323.48),
    # Extended (race-centric)
    "pri-elf-cha": (_E, 18796560, 26909.5, 4718.5, 2.0, 72.4, 1.1, 0.0, 83744.0, 7109.35),
    "ran-elf-cha": (_E, 18238686, 26607.0, 7583.0, 4.0, 70.2, 1.1, 0.0, 66690.0, 9014.18),
    "wiz-elf-cha": (_E, 15277820, 19512.0, 2988.5, 1.0, 58.8, 0.9, 0.0, 71664.0, 5005.16),
    "arc-dwa-law": (_E, 25100788, 34669.0, 4026.0, 1.0, 96.7, 1.5, 0.0, 83496.0, 5445.69),
    "cav-dwa-law": (_E, 22871890, 32261.0, 7158.0, 3.0, 88.1, 1.5, 0.0, 161682.0, 11893.48),
    "val-dwa-law": (_E, 32787658, 33973.0, 8652.5, 3.0, 126.6, 2.5, 0.0, 1136591.0, 23473.61),
    "arc-gno-neu": (_E, 24144048, 34432.0, 4077.5, 1.0, 93.0, 1.4, 0.0, 110054.0, 5316.57),
    "cav-gno-neu": (_E, 21624779, 29860.0, 6446.0, 3.0, 83.3, 1.4, 0.0, 142460.0, 10083.06),
    "hea-gno-neu": (_E, 14884704, 18518.0, 1980.5, 1.0, 57.3, 0.9, 0.0, 69566.0, 3783.93),
    "ran-gno-neu": (_E, 17571659, 25970.0, 5326.0, 2.0, 67.7, 1.1, 0.0, 58137.0, 6965.04),
    "wiz-gno-neu": (_E, 14193637, 19206.0, 2736.0, 1.0, 54.7, 0.9, 0.0, 37376.0, 4317.51),
    "bar-orc-cha": (_E, 27826356, 39291.0, 10499.0, 4.0, 107.2, 1.8, 0.0, 164296.0, 17594.38),
    "ran-orc-cha": (_E, 18127448, 26707.0, 5460.0, 2.0, 69.8, 1.1, 3.0, 69244.0, 7608.48),
    "rog-orc-cha": (_E, 16674806, 22351.0, 3103.0, 1.0, 64.2, 1.0, 0.0, 54892.0, 4897.69),
    "wiz-orc-cha": (_E, 15994150, 22570.5, 3241.5, 1.0, 61.6, 1.0, 0.0, 40871.0, 5016.74),
    # Complete (alignment-centric)
    "arc-hum-law": (_C, 23422383, 31446.0, 4188.0, 1.0, 90.2, 1.3, 2.0, 84823.0, 5826.35),
    "cav-hum-law": (_C, 22328494, 31039.0, 8174.0, 4.0, 86.0, 1.3, 0.0, 156966.0, 12462.82),
    "mon-hum-law": (_C, 30782317, 39647.0, 10855.0, 4.0, 118.5, 1.9, 7.0, 190783.0, 16091.57),
    "pri-hum-law": (_C, 18298816, 27192.0, 4833.0, 1.0, 70.5, 1.1, 0.0, 99250.0, 6847.99),
    "val-hum-law": (_C, 30171035, 34570.5, 9707.0, 4.0, 116.2, 2.1, 0.0, 428274.0, 26103.03),
    "bar-hum-cha": (_C, 25362111, 35925.0, 12574.0, 5.0, 97.7, 1.6, 0.0, 164446.0, 18228.11),
    "mon-hum-cha": (_C, 33662420, 41730.5, 11418.0, 4.0, 129.6, 2.1, 0.0, 223997.0, 18353.30),
    "pri-hum-cha": (_C, 18667816, 28204.5, 5847.0, 2.0, 71.9, 1.1, 0.0, 58367.0, 8262.56),
    "ran-hum-cha": (_C, 16999630, 24698.5, 6236.0, 2.0, 65.6, 1.0, 3.0, 62599.0, 8378.50),
    "wiz-hum-cha": (_C, 14635591, 20257.0, 3294.0, 1.0, 56.4, 0.9, 0.0, 55185.0, 5316.82),
}


def parse_task_id(text: str) -> CharacterSpec:
    """Parse a canonical "role-race-alignment" id into a CharacterSpec.

    Raises MalformedId when the string does not have the three-code shape,
    UnknownTask when the codes are valid but the combination is not one of
    the 38 benchmark tasks.
    """
    if not isinstance(text, str):
        raise MalformedId(f"task id must be a string, got {type(text).__name__}")
    parts = text.split("-")
    if len(parts) != 3:
        raise MalformedId(f"task id must be role-race-alignment, got {text!r}")
    role, race, alignment = parts
    if role not in ROLES or race not in RACES or alignment not in ALIGNMENTS:
        raise MalformedId(f"unrecognized codes in task id {text!r}")
    if text not in _TABLE:
        raise UnknownTask(f"{text!r} is not one of the 38 benchmark tasks")
    return CharacterSpec(role, race, alignment)


def _row(task: CharacterSpec | str):
    key = task if isinstance(task, str) else task.task_id
    try:
        return key, _TABLE[key]
    except KeyError:
        raise UnknownTask(f"{key!r} is not in the catalog") from None


def catalog_stats(task: CharacterSpec | str) -> TaskStats:
    _, row = _row(task)
    return TaskStats(*row[1:7])


def catalog_category(task: CharacterSpec | str) -> TaskCategory:
    _, row = _row(task)
    return row[0]


def normalization_scores(task: CharacterSpec | str) -> NormalizationScores:
    _, row = _row(task)
    return NormalizationScores(*row[7:10])


def all_task_ids() -> tuple[str, ...]:
    return tuple(_TABLE)


def all_tasks() -> tuple[CharacterSpec, ...]:
    return tuple(parse_task_id(t) for t in _TABLE)


def tasks_in_category(category: TaskCategory) -> tuple[str, ...]:
    return tuple(t for t, row in _TABLE.items() if row[0] is category)


def catalog_as_dict() -> dict:
    """Full catalog in one JSON-friendly mapping (CLI `catalog` export)."""
    out = {}
    for task_id, row in _TABLE.items():
        cat, *rest = row
        out[task_id] = {
            "category": cat.value,
            "transitions": rest[0],
            "median_turns": rest[1],
            "median_score": rest[2],
            "median_deathlvl": rest[3],
            "size_gb": rest[4],
            "compressed_size_gb": rest[5],
            "min_score": rest[6],
            "max_score": rest[7],
            "mean_score": rest[8],
        }
    return out


def catalog_json(indent: int | None = 2) -> str:
    return json.dumps(catalog_as_dict(), indent=indent)
