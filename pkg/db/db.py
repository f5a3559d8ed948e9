"""Dataset directories, images, manifests and the CSV/JSON result files.

A dataset is a directory holding manifest.json and one sub-directory per
pair with a.img, b.img, pair.json and landmarks.csv.
"""
import csv
import json
import logging
from io import StringIO
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from db.base import PathLike, Reader, atomic_write_bytes, atomic_write_text, pack_u32, read_magic
from models.entities import LandmarkObservation, MatchResult, PixelCoord, RelativePose, ScenePair, SensorPose
from models.errors import DatasetError
from models.schemas import SonarIntrinsics

logger = logging.getLogger(__name__)

IMAGE_MAGIC = b"SNRI"
MANIFEST = "manifest.json"
LANDMARK_COLUMNS = ["id", "ra", "thetaa", "rb", "thetab", "covisible"]
MATCH_COLUMNS = ["query_u", "query_v", "pred_u", "pred_v", "variance", "weight", "low_confidence"]
LOSS_COLUMNS = ["epoch", "loss", "epipolar", "cyclic", "pairs"]


def encode_image(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    rows, cols = image.shape
    return IMAGE_MAGIC + pack_u32(rows, cols) + np.ascontiguousarray(image, dtype="<f4").tobytes()


def decode_image(payload: bytes, source: str = "<bytes>") -> np.ndarray:
    reader = Reader(payload, source, error_cls=DatasetError)
    read_magic(reader, IMAGE_MAGIC)
    rows, cols = reader.u32("rows"), reader.u32("cols")
    data = np.frombuffer(reader.take(4 * rows * cols, "pixels"), dtype="<f4")
    if reader.remaining():
        raise DatasetError(f"{source}: {reader.remaining()} trailing bytes.")
    return data.astype(np.float64).reshape(rows, cols)


def write_image(path: PathLike, image: np.ndarray) -> None:
    atomic_write_bytes(path, encode_image(image))


def read_image(path: PathLike) -> np.ndarray:
    path = Path(path)
    try:
        return decode_image(path.read_bytes(), str(path))
    except OSError as exc:
        raise DatasetError(f"Cannot read image {path}: {exc}") from exc


def _json_dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _read_json(path: Path) -> dict:
    try:
        with path.open("r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise DatasetError(f"Cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path} is not valid JSON: {exc}") from exc


def pair_document(pair: ScenePair) -> dict:
    return {
        "rotation": [float(v) for v in pair.pose_ab.rotation.ravel()],
        "translation": [float(v) for v in pair.pose_ab.translation],
        "intrinsics": pair.intrinsics.to_document(),
        "seeds": dict(pair.seeds),
        "sensor_a": pair.sensor_a.to_document(),
        "sensor_b": pair.sensor_b.to_document(),
    }


def landmarks_csv(observations: Sequence[LandmarkObservation]) -> str:
    output = StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(LANDMARK_COLUMNS)
    for o in observations:
        writer.writerow([o.id, repr(float(o.ra)), repr(float(o.thetaa)), repr(float(o.rb)), repr(float(o.thetab)), int(o.covisible)])
    return output.getvalue()


def write_pair(root: PathLike, pair: ScenePair) -> Path:
    directory = Path(root) / pair.pair_id
    directory.mkdir(parents=True, exist_ok=True)
    write_image(directory / "a.img", pair.image_a)
    write_image(directory / "b.img", pair.image_b)
    atomic_write_text(directory / "pair.json", _json_dump(pair_document(pair)))
    atomic_write_text(directory / "landmarks.csv", landmarks_csv(pair.landmarks))
    logger.debug("Wrote %s", directory)
    return directory


def _read_landmarks(path: Path) -> List[LandmarkObservation]:
    try:
        with path.open("r", encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DatasetError(f"Cannot read {path}: {exc}") from exc
    try:
        return [
            LandmarkObservation(
                int(row["id"]), float(row["ra"]), float(row["thetaa"]), float(row["rb"]), float(row["thetab"]), row["covisible"] == "1"
            )
            for row in rows
        ]
    except (KeyError, ValueError) as exc:
        raise DatasetError(f"{path} is malformed: {exc}") from exc


def read_pair(directory: PathLike) -> ScenePair:
    directory = Path(directory)
    doc = _read_json(directory / "pair.json")
    try:
        pose = RelativePose(np.array(doc["rotation"], dtype=np.float64).reshape(3, 3), np.array(doc["translation"], dtype=np.float64))
        intr = SonarIntrinsics.from_document(doc["intrinsics"])
        sensor_a = SensorPose(**doc.get("sensor_a", {}))
        sensor_b = SensorPose(**doc.get("sensor_b", {}))
        seeds = {k: int(v) for k, v in doc.get("seeds", {}).items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{directory / 'pair.json'} is malformed: {exc}") from exc
    return ScenePair(
        image_a=read_image(directory / "a.img"),
        image_b=read_image(directory / "b.img"),
        pose_ab=pose,
        intrinsics=intr,
        landmarks=_read_landmarks(directory / "landmarks.csv"),
        sensor_a=sensor_a,
        sensor_b=sensor_b,
        seeds=seeds,
        pair_id=directory.name,
    )


def write_manifest(root: PathLike, manifest: Dict) -> None:
    atomic_write_text(Path(root) / MANIFEST, _json_dump(manifest))


def read_manifest(root: PathLike) -> Dict:
    path = Path(root) / MANIFEST
    if not path.is_file():
        raise DatasetError(f"No dataset at {root}: {MANIFEST} is missing.")
    return _read_json(path)


def matches_csv(results: Sequence[MatchResult]) -> str:
    output = StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(MATCH_COLUMNS)
    for m in results:
        writer.writerow(
            [repr(float(m.query.u)), repr(float(m.query.v)), repr(float(m.predicted.u)), repr(float(m.predicted.v)), repr(float(m.variance)), repr(float(m.weight)), int(m.low_confidence)]
        )
    return output.getvalue()


def write_matches(path: PathLike, results: Sequence[MatchResult]) -> None:
    atomic_write_text(path, matches_csv(results))


def read_matches(path: PathLike) -> List[MatchResult]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DatasetError(f"Cannot read matches {path}: {exc}") from exc
    try:
        return [
            MatchResult(
                query=PixelCoord(float(row["query_u"]), float(row["query_v"])),
                predicted=PixelCoord(float(row["pred_u"]), float(row["pred_v"])),
                variance=float(row["variance"]),
                weight=float(row["weight"]),
                low_confidence=row["low_confidence"] == "1",
            )
            for row in rows
        ]
    except (KeyError, ValueError) as exc:
        raise DatasetError(f"{path} is malformed: {exc}") from exc


def write_loss_csv(path: PathLike, trace) -> None:
    output = StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(LOSS_COLUMNS)
    for record in trace:
        writer.writerow([record.epoch, repr(float(record.loss)), repr(float(record.epipolar)), repr(float(record.cyclic)), record.pairs])
    atomic_write_text(path, output.getvalue())


def read_loss_csv(path: PathLike) -> List[dict]:
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        return [
            {"epoch": int(r["epoch"]), "loss": float(r["loss"]), "epipolar": float(r["epipolar"]), "cyclic": float(r["cyclic"]), "pairs": int(r["pairs"])}
            for r in csv.DictReader(fh)
        ]


def write_json(path: PathLike, doc) -> None:
    atomic_write_text(path, _json_dump(doc))


def read_json(path: PathLike) -> dict:
    return _read_json(Path(path))
