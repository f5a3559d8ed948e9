import logging
from pathlib import Path
from typing import Optional

import click

from db.db import write_manifest, write_pair
from geometry.sonar_model import DEFAULT_PRESET, load_intrinsics
from models.errors import DatasetError
from models.schemas import RunConfig
from routers.common import common_options, handle_errors, load_run_config, require
from simulator.scene import DEFAULT_BASE_POSE, random_scene
from simulator.trajectories import generate_trajectory_pairs, is_small_variation
from utils.parallel import ordered_map

logger = logging.getLogger(__name__)


def cmd_generate(cfg: RunConfig) -> Path:
    """Render `cfg.count` pairs of one random scene and write them with a manifest."""
    root = Path(require(cfg.output, "--output"))
    intr = load_intrinsics(cfg.intrinsics or DEFAULT_PRESET)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"Cannot create dataset directory {root}: {exc}") from exc

    scene = random_scene(cfg.seed, intr, cfg.n_landmarks, DEFAULT_BASE_POSE, cfg.floor_reflectivity)
    pairs = generate_trajectory_pairs(scene, DEFAULT_BASE_POSE, cfg.trajectory, intr, cfg.noise, cfg.count, seed=cfg.seed, jobs=cfg.jobs)
    try:
        ordered_map(lambda pair: write_pair(root, pair), pairs, cfg.jobs)
    except OSError as exc:
        raise DatasetError(f"Cannot write dataset {root}: {exc}") from exc

    small = [p.pair_id for p in pairs if is_small_variation(p)]
    large = [p.pair_id for p in pairs if p.pair_id not in set(small)]
    write_manifest(
        root,
        {
            "count": len(pairs),
            "seed": cfg.seed,
            "intrinsics": intr.to_document(),
            "landmarks": len(scene.landmarks),
            "pairs": [p.pair_id for p in pairs],
            "split": {"small": small, "large": large},
            "counts": {"small": len(small), "large": len(large)},
        },
    )
    logger.info("Wrote %d pairs to %s (%d small, %d large variation)", len(pairs), root, len(small), len(large))
    return root


@click.command("generate")
@common_options
@click.option("--output", default=None, help="Dataset directory to create.")
@click.option("--count", type=int, default=None, help="Number of pairs.")
@click.option("--landmarks", "n_landmarks", type=int, default=None, help="Landmarks in the scene.")
@handle_errors
def generate(config_path: Optional[str], seed, jobs, intrinsics, output, count, n_landmarks):
    """Render a synthetic pose-annotated dataset."""
    cfg = load_run_config(
        config_path,
        {"seed": seed, "jobs": jobs, "intrinsics": intrinsics, "output": output, "count": count, "n_landmarks": n_landmarks},
    )
    click.echo(str(cmd_generate(cfg)))
