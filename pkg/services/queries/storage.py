## services/queries/storage.py

"""
Line-delimited JSON dataset files, one description per line.
"""
import json
import logging
from pathlib import Path
from typing import Iterable, List, Union

from core.errors import MissingArtifactError
from services.queries.types import QueryDescription

log = logging.getLogger(__name__)


def save_descriptions(descriptions: Iterable[QueryDescription], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for description in descriptions:
            f.write(json.dumps(description.to_dict(), sort_keys=True) + "\n")
    log.debug(f"[ QUERIES ] Wrote {path}")
    return path


def load_descriptions(path: Union[str, Path]) -> List[QueryDescription]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path, "gen-queries")
    with open(path, "r", encoding="utf-8") as f:
        return [QueryDescription.from_dict(json.loads(line)) for line in f if line.strip()]
