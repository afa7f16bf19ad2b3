"""
Run directory layout, artifact lookup and run manifests
"""
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Union

from core.container import VERSION as CONTAINER_VERSION
from core.errors import MissingArtifactError

log = logging.getLogger(__name__)

FORMATS = {
    "container": CONTAINER_VERSION,
    "descriptions": 1,
    "vocabulary": 1,
    "metrics": 1,
}


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


class ArtifactStore:
    """Handles file system layout for every artifact of a run"""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        os.makedirs(self.root, exist_ok=True)

    def path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)

    def scene(self, scene_id: str) -> Path:
        return self.path("scenes", f"{scene_id}.tlck")

    def queries(self, scene_id: str, tag: str = "") -> Path:
        return self.path("queries" + (f"-{tag}" if tag else ""), f"{scene_id}.jsonl")

    def stats(self, tag: str = "") -> Path:
        return self.path("queries" + (f"-{tag}" if tag else ""), "stats.json")

    def cells(self, scene_id: str, tag: str = "") -> Path:
        return self.path("cells" + (f"-{tag}" if tag else ""), f"{scene_id}.tlck")

    def index(self, scene_id: str) -> Path:
        return self.path("indexes", f"{scene_id}.tlck")

    def model(self, name: str) -> Path:
        return self.path("models", name)

    def report(self, name: str) -> Path:
        return self.path("reports", name)

    def manifest(self, artifact: str) -> Path:
        return self.path(f"{artifact}.manifest.json")

    def require(self, path: Path, hint: str) -> Path:
        if not path.exists():
            raise MissingArtifactError(path, hint)
        return path

    def relative(self, path: Union[str, Path]) -> str:
        path = Path(path)
        try:
            return path.relative_to(self.root).as_posix()
        except ValueError:
            return path.as_posix()

    def digests(self, paths: Iterable[Union[str, Path]]) -> Dict[str, str]:
        return {self.relative(p): sha256_file(p) for p in sorted(Path(p) for p in paths) if Path(p).is_file()}

    def write_manifest(
        self,
        artifact: str,
        command: str,
        config: Mapping,
        inputs: Iterable[Union[str, Path]] = (),
        outputs: Iterable[Union[str, Path]] = (),
        timings: Optional[Mapping[str, float]] = None,
    ) -> Path:
        """
        <artifact>.manifest.json: config snapshot, input and output digests,
        format versions and per-stage wall-clock seconds.
        """
        payload = {
            "command": command,
            "config": dict(config),
            "inputs": self.digests(inputs),
            "outputs": self.digests(outputs),
            "formats": FORMATS,
            "timings": {k: round(v, 3) for k, v in (timings or {}).items()},
        }
        path = self.manifest(artifact)
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
        log.debug(f"[ STORAGE ] Manifest written: {path}")
        return path
