# pipeline/artifacts.py
"""
Run directory bookkeeping.

manifest.json maps every produced stage to the key it was produced with (a
SHA-256 over the producing config subsection and the content hashes of its
input files) and to the content hashes of its output files. A stage whose
recorded key matches is up to date; a mismatching key is a stale artifact.
"""
import hashlib
import json
from pathlib import Path
from typing import Iterable, Optional, Union

from utils.errors import MissingArtifactError, StaleArtifactError
from utils.logger import get_logger

logger = get_logger(__name__)

MANIFEST = "manifest.json"

# artifact file -> command producing it
PRODUCERS = {
    "paths.npz": "simulate",
    "model.npz": "fit",
    "system.txt": "build",
    "gramian_P.bin": "gramians",
    "gramian_Q.bin": "gramians",
    "spectra.csv": "gramians",
    "sigma.csv": "gramians",
    "balanced_sigma.csv": "reduce",
    "l2_curve.csv": "reduce",
    "smile_full.csv": "price",
}


def file_hash(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def stage_key(sections: dict, inputs: Iterable[str] = ()) -> str:
    """Hash of a config subsection (canonical JSON) plus input content hashes."""
    payload = json.dumps({"config": sections, "inputs": sorted(inputs)}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


class RunDirectory:
    """
    Output directory of one pipeline run.

    Attributes:
        root (Path): Directory holding artifacts and manifest.json.
        force (bool): Overwrite stale artifacts instead of refusing.
    """

    def __init__(self, root: Union[str, Path], force: bool = False):
        self.root = Path(root)
        self.force = force
        self.root.mkdir(parents=True, exist_ok=True)
        self._manifest = self._load()

    def _load(self) -> dict:
        path = self.root / MANIFEST
        if not path.exists():
            return {}
        with open(path) as f:
            return json.load(f)

    def _save(self) -> None:
        with open(self.root / MANIFEST, "w") as f:
            json.dump(self._manifest, f, indent=2, sort_keys=True)
            f.write("\n")

    def path(self, name: str) -> Path:
        return self.root / name

    def require(self, *names: str, command: Optional[str] = None) -> list[Path]:
        """
        Paths of required inputs.

        :raises MissingArtifactError: listing every missing file and the command(s) producing them.
        """
        missing = [n for n in names if not self.path(n).exists()]
        if missing:
            commands = command or ", ".join(sorted({PRODUCERS.get(n, "build") for n in missing}))
            logger.error(f"Missing artifacts in {self.root}: {', '.join(missing)}")
            raise MissingArtifactError(", ".join(str(self.path(n)) for n in missing), commands)
        return [self.path(n) for n in names]

    def input_hash(self, name: str) -> str:
        return f"{name}:{file_hash(self.path(name))}"

    def is_current(self, stage: str, key: str) -> bool:
        """
        True when the stage was produced with this key and its outputs are intact.

        :raises StaleArtifactError: outputs exist from a different key and force is off.
        """
        entry = self._manifest.get(stage)
        if entry is None:
            return False
        outputs = entry.get("outputs", {})
        if not any(self.path(f).exists() for f in outputs):
            return False
        intact = all(self.path(f).exists() and file_hash(self.path(f)) == h for f, h in outputs.items())
        if entry.get("key") == key and intact:
            logger.info(f"{stage}: up to date in {self.root}")
            return True
        if self.force:
            logger.warning(f"{stage}: overwriting stale artifacts in {self.root}")
            return False
        logger.error(f"{stage}: artifacts in {self.root} were produced from a different configuration")
        raise StaleArtifactError(
            f"{stage} artifacts in {self.root} are stale (configuration or inputs changed); rerun with --force"
        )

    def record(self, stage: str, key: str, outputs: Iterable[str]) -> None:
        self._manifest[stage] = {
            "key": key,
            "outputs": {name: file_hash(self.path(name)) for name in outputs},
        }
        self._save()
        logger.info(f"{stage}: recorded {len(self._manifest[stage]['outputs'])} artifacts")
