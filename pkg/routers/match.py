import logging
from pathlib import Path
from typing import List, Optional, Tuple

import click

from db.db import write_json, write_matches
from db.weights import load_weights
from evaluation.detector import detect_keypoints
from matching.baseline import ncc_feature_maps
from matching.layer import match_keypoints
from models.entities import MatchResult, ScenePair
from models.errors import SonarKitError
from models.schemas import EncoderConfig, MatchConfig, RunConfig
from network.encoder import ModelWeights, forward_pair
from routers.common import coam_flag, common_options, handle_errors, load_run_config, open_dataset, require
from utils.parallel import ordered_map

logger = logging.getLogger(__name__)


def match_pair(
    pair: ScenePair,
    cfg: MatchConfig,
    weights: Optional[ModelWeights] = None,
    encoder: EncoderConfig = EncoderConfig(),
    baseline: bool = False,
) -> List[MatchResult]:
    """Detector keypoints of image a matched into image b with learned or NCC maps."""
    keypoints = detect_keypoints(pair.image_a, cfg.max_keypoints, cfg.nms_radius)
    if baseline:
        maps_a = ncc_feature_maps(pair.image_a, coarse_stride=encoder.coarse_stride)
        maps_b = ncc_feature_maps(pair.image_b, coarse_stride=encoder.coarse_stride)
    else:
        maps_a, maps_b = forward_pair(pair.image_a, pair.image_b, weights, encoder)
    return match_keypoints(keypoints, maps_a, maps_b, cfg)


def cmd_match(cfg: RunConfig) -> Path:
    """One match CSV per pair plus a summary manifest in the output directory."""
    session = open_dataset(cfg)
    out = Path(require(cfg.output, "--output"))
    weights = None if cfg.baseline else load_weights(require(cfg.weights, "--weights"), cfg.encoder)
    out.mkdir(parents=True, exist_ok=True)

    def run(pair_id: str) -> Tuple[str, Optional[int], Optional[str]]:
        try:
            results = match_pair(session.load(pair_id), cfg.match, weights, cfg.encoder, cfg.baseline)
        except SonarKitError as exc:
            logger.warning("%s: %s", pair_id, exc)
            return pair_id, None, f"{type(exc).__name__}: {exc}"
        write_matches(out / f"{pair_id}.csv", results)
        return pair_id, sum(not r.low_confidence for r in results), None

    rows = ordered_map(run, session.pair_ids, cfg.jobs)
    write_json(
        out / "manifest.json",
        {
            "seed": cfg.seed,
            "dataset": str(session.root),
            "weights": cfg.weights,
            "baseline": cfg.baseline,
            "confidence": cfg.match.confidence,
            "pairs": {pid: {"confident": n, "error": err} for pid, n, err in rows},
        },
    )
    logger.info("Matched %d pairs into %s", len(rows), out)
    return out


@click.command("match")
@common_options
@click.option("--dataset", default=None)
@click.option("--weights", default=None, help="SNCW weights from `train`.")
@click.option("--output", default=None, help="Directory for the per-pair match CSVs.")
@click.option("--confidence", type=float, default=None, help="Weights below this are flagged low-confidence.")
@click.option("--coam", type=click.Choice(["on", "off"]), default=None, help="Co-attention encoder; must match the weights.")
@click.option("--baseline/--learned", default=None, help="Raw-patch NCC maps instead of learned descriptors.")
@handle_errors
def match(config_path: Optional[str], seed, jobs, intrinsics, dataset, weights, output, confidence, coam, baseline):
    """Match detector keypoints across every pair of a dataset."""
    cfg = load_run_config(
        config_path,
        {
            "seed": seed,
            "jobs": jobs,
            "intrinsics": intrinsics,
            "dataset": dataset,
            "weights": weights,
            "output": output,
            "baseline": baseline,
            "match.confidence": confidence,
            "encoder.coattention": coam_flag(coam),
        },
    )
    click.echo(str(cmd_match(cfg)))
