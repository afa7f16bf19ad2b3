## services/evaluation/modes.py

"""
Evaluation modes are '+'-joined flags, e.g. "coarse-oracle+matched-mean".
Each flag pins one stage: the candidate source, whether the fine stage runs,
how hints are matched and how translations are obtained.
"""
from dataclasses import dataclass
from typing import Dict, List, Tuple

from core.errors import OracleConfigError

# flag -> settings it pins, as (field, value) pairs
FLAGS: Dict[str, Tuple[Tuple[str, object], ...]] = {
    "full": (),
    "learned-translation": (),
    "coarse-only": (("fine", False),),
    "cell-center": (("fine", False),),
    "coarse-oracle": (("coarse", "oracle"),),
    "coarse-random": (("coarse", "random"),),
    "matching-oracle": (("matching", "oracle"),),
    "fine-random": (("matching", "random"),),
    "translation-oracle": (("translation", "oracle"),),
    "matched-mean": (("translation", "zero"),),
    "fine-oracle": (("matching", "oracle"), ("translation", "oracle")),
    "both-oracles": (("coarse", "oracle"), ("matching", "oracle"), ("translation", "oracle")),
}

ORACLE_PRESET = ["full", "coarse-only", "coarse-oracle", "fine-oracle", "both-oracles", "coarse-random", "fine-random"]
FINE_ABLATION_PRESET = [
    "coarse-oracle+cell-center",
    "coarse-oracle+matched-mean",
    "coarse-oracle+learned-translation",
    "coarse-oracle+translation-oracle",
]
PRESETS = {"oracles": ORACLE_PRESET, "fine-ablation": FINE_ABLATION_PRESET}


@dataclass(frozen=True)
class EvalMode:
    name: str
    coarse: str = "learned"
    fine: bool = True
    matching: str = "learned"
    translation: str = "learned"

    @property
    def is_random(self) -> bool:
        return self.coarse == "random" or (self.fine and self.matching == "random")

    @property
    def needs_coarse_model(self) -> bool:
        return self.coarse == "learned"

    @property
    def needs_fine_model(self) -> bool:
        return self.fine and (self.matching == "learned" or self.translation == "learned")


def parse_mode(name: str) -> EvalMode:
    settings: Dict[str, object] = {}
    for flag in name.split("+"):
        flag = flag.strip()
        if flag not in FLAGS:
            raise OracleConfigError(f"unknown evaluation flag '{flag}' in mode '{name}'")
        for key, value in FLAGS[flag]:
            if key in settings and settings[key] != value:
                raise OracleConfigError(f"mode '{name}' sets {key} twice ({settings[key]} and {value})")
            settings[key] = value
    if settings.get("fine") is False and ("matching" in settings or "translation" in settings):
        raise OracleConfigError(f"mode '{name}' disables the fine stage but configures it")
    return EvalMode(name=name, **settings)


def expand_modes(names: List[str]) -> List[EvalMode]:
    """Parse mode names; preset names expand in place"""
    modes = []
    for name in names:
        for item in PRESETS.get(name, [name]):
            modes.append(parse_mode(item))
    return modes
