## services/models/vocab.py

import logging
from pathlib import Path
from typing import Iterable, List, Sequence, Union

import numpy as np

from core.errors import MissingArtifactError
from services.queries.language import DIRECTION_WORDS, FUNCTION_WORDS, tokenize
from services.scene.palette import palette_names

log = logging.getLogger(__name__)

UNK = "<unk>"


class Vocabulary:
    """Ordered token list; index 0 is the unknown token"""

    def __init__(self, tokens: Sequence[str]):
        ordered = [UNK]
        for token in tokens:
            if token not in ordered:
                ordered.append(token)
        self.tokens: List[str] = ordered
        self._index = {token: i for i, token in enumerate(ordered)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        return self._index.get(token, 0)

    def encode(self, text: str) -> np.ndarray:
        """Token indices of a hint; empty text maps to the unknown token"""
        ids = [self.index(token) for token in tokenize(text)]
        return np.array(ids or [0], dtype=np.int64)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.tokens[1:]) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocabulary":
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(path, "train-coarse")
        return cls([line for line in path.read_text(encoding="utf-8").splitlines() if line])


def build_vocabulary(class_names: Iterable[str]) -> Vocabulary:
    """Function words, direction words, palette colors, then class words"""
    tokens: List[str] = list(FUNCTION_WORDS)
    for phrase in DIRECTION_WORDS:
        tokens.extend(tokenize(phrase))
    tokens.extend(palette_names())
    for name in class_names:
        tokens.extend(tokenize(name))
    return Vocabulary(tokens)
