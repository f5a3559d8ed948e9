"""Writes a small fixed demo dataset: a few pairs from each of three scenes."""
import logging
import sys
from dataclasses import replace
from pathlib import Path

from dotenv import load_dotenv

from db.db import write_manifest, write_pair
from geometry.sonar_model import DEFAULT_PRESET, load_intrinsics
from models.schemas import NoiseConfig, TrajectoryConfig
from simulator.scene import DEFAULT_BASE_POSE, random_scene
from simulator.trajectories import generate_trajectory_pairs, split_dataset
from utils.log import configure_logging

load_dotenv()
logger = logging.getLogger("seed_data")

SCENE_SEEDS = (11, 23, 47)
PAIRS_PER_SCENE = 4


def seed(root: Path, intrinsics: str = DEFAULT_PRESET) -> Path:
    intr = load_intrinsics(intrinsics)
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for scene_seed in SCENE_SEEDS:
        scene = random_scene(scene_seed, intr, base=DEFAULT_BASE_POSE)
        pairs = generate_trajectory_pairs(
            scene, DEFAULT_BASE_POSE, TrajectoryConfig(), intr, NoiseConfig(seed=scene_seed), PAIRS_PER_SCENE, seed=scene_seed
        )
        for pair in pairs:
            # pair ids restart per scene; prefix them so the three scenes share one directory
            pair = replace(pair, pair_id=f"s{scene_seed}_{pair.pair_id}")
            write_pair(root, pair)
            written.append(pair)
    small, large = split_dataset(written)
    write_manifest(
        root,
        {
            "count": len(written),
            "seed": SCENE_SEEDS[0],
            "intrinsics": intr.to_document(),
            "scenes": list(SCENE_SEEDS),
            "pairs": [p.pair_id for p in written],
            "split": {"small": [p.pair_id for p in small], "large": [p.pair_id for p in large]},
            "counts": {"small": len(small), "large": len(large)},
        },
    )
    logger.info("Seeded %d pairs into %s", len(written), root)
    return root


if __name__ == "__main__":
    configure_logging()
    seed(Path(sys.argv[1] if len(sys.argv) > 1 else "data/demo"))
