import logging
from pathlib import Path
from typing import List, Optional

import click

from db.db import read_matches, write_json
from evaluation.metrics import PairMetrics, aggregate, evaluate_pair, threshold_key
from geometry.sonar_model import polar_to_pixel
from models.entities import MatchResult, ScenePair
from models.errors import DatasetError, SonarKitError
from models.schemas import RunConfig
from routers.common import common_options, handle_errors, load_run_config, open_dataset, require
from simulator.trajectories import is_small_variation
from utils.parallel import ordered_map

logger = logging.getLogger(__name__)


def ground_truth_matches(pair: ScenePair) -> List[MatchResult]:
    """Covisible landmarks as perfect matches."""
    out = []
    for obs in pair.landmarks:
        if not obs.covisible:
            continue
        query = polar_to_pixel(obs.ra, obs.thetaa, pair.intrinsics)
        predicted = polar_to_pixel(obs.rb, obs.thetab, pair.intrinsics)
        out.append(MatchResult(query=query, predicted=predicted, variance=0.0, weight=1.0))
    return out


def cmd_eval(cfg: RunConfig) -> Path:
    """Metrics JSON with per-pair records and small/large/all aggregates."""
    session = open_dataset(cfg)
    out = Path(require(cfg.output, "--output"))
    matches_dir = None if cfg.ground_truth_matches else Path(require(cfg.matches, "--matches"))
    if matches_dir is not None and not matches_dir.is_dir():
        raise DatasetError(f"No match directory at {matches_dir}.")

    def run(item) -> PairMetrics:
        index, pair_id = item
        pair = session.load(pair_id)
        if matches_dir is None:
            matches = ground_truth_matches(pair)
        else:
            try:
                matches = [m for m in read_matches(matches_dir / f"{pair_id}.csv") if not m.low_confidence]
            except SonarKitError as exc:
                logger.warning("%s: %s", pair_id, exc)
                group = "small" if is_small_variation(pair) else "large"
                return PairMetrics(pair_id=pair_id, group=group, n_matches=0, error=f"{type(exc).__name__}: {exc}")
        return evaluate_pair(pair, matches, cfg.eval, cfg.seed, index)

    records = ordered_map(run, list(enumerate(session.pair_ids)), cfg.jobs)
    write_json(
        out,
        {
            "seed": cfg.seed,
            "dataset": str(session.root),
            "matches": None if matches_dir is None else str(matches_dir),
            "threshold_px": cfg.eval.threshold_px,
            "thresholds": sorted({threshold_key(cfg.eval.threshold_px), *(threshold_key(t) for t in cfg.eval.extra_thresholds_px)}),
            "pairs": [r.to_document() for r in records],
            "aggregate": aggregate(records, cfg.eval.threshold_px),
        },
    )
    failed = sum(r.error is not None for r in records)
    logger.info("Evaluated %d pairs (%d flagged) into %s", len(records), failed, out)
    return out


@click.command("eval")
@common_options
@click.option("--dataset", default=None)
@click.option("--matches", default=None, help="Directory written by `match`.")
@click.option("--output", default=None, help="Metrics JSON to write.")
@click.option("--threshold-px", type=float, default=None, help="Inlier threshold in pixels.")
@click.option("--ground-truth-matches/--predicted-matches", default=None, help="Use covisible landmarks as the matches.")
@handle_errors
def evaluate(config_path: Optional[str], seed, jobs, intrinsics, dataset, matches, output, threshold_px, ground_truth_matches):
    """Inlier ratios, Z-test pruning and bundle-adjusted pose errors."""
    cfg = load_run_config(
        config_path,
        {
            "seed": seed,
            "jobs": jobs,
            "intrinsics": intrinsics,
            "dataset": dataset,
            "matches": matches,
            "output": output,
            "eval.threshold_px": threshold_px,
            "ground_truth_matches": ground_truth_matches,
        },
    )
    click.echo(str(cmd_eval(cfg)))
