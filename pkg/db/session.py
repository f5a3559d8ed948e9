from pathlib import Path
from typing import Iterator, List, Optional

from db.base import PathLike
from db.db import read_manifest, read_pair
from models.entities import ScenePair
from models.errors import DatasetError
from models.schemas import SonarIntrinsics


class DatasetSession:
    """Read access to a generated dataset; pairs are loaded on demand."""

    def __init__(self, root: PathLike):
        self.root = Path(root)
        self.manifest = read_manifest(self.root)
        self.pair_ids: List[str] = list(self.manifest.get("pairs", []))
        missing = [p for p in self.pair_ids if not (self.root / p).is_dir()]
        if missing:
            raise DatasetError(f"Dataset {self.root} lists missing pairs: {', '.join(missing[:5])}")

    def __len__(self) -> int:
        return len(self.pair_ids)

    def __iter__(self) -> Iterator[ScenePair]:
        for pair_id in self.pair_ids:
            yield self.load(pair_id)

    def load(self, pair_id: str) -> ScenePair:
        return read_pair(self.root / pair_id)

    def load_all(self) -> List[ScenePair]:
        return [self.load(p) for p in self.pair_ids]

    @property
    def intrinsics(self) -> Optional[SonarIntrinsics]:
        """Intrinsics recorded in the manifest, if any."""
        doc = self.manifest.get("intrinsics")
        if doc is None:
            return None
        try:
            return SonarIntrinsics.from_document(doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"Manifest of {self.root} has malformed intrinsics: {exc}") from exc

    @property
    def seed(self) -> int:
        return int(self.manifest.get("seed", 0))
