import logging
from pathlib import Path
from typing import Optional, Tuple

import click

from db.db import write_loss_csv
from db.weights import TrainingCheckpoint, load_checkpoint, load_weights, save_checkpoint, save_weights
from models.errors import DatasetError
from models.schemas import RunConfig
from network.training import FitResult, fit
from routers.common import coam_flag, common_options, handle_errors, load_run_config, open_dataset, require

logger = logging.getLogger(__name__)


def loss_csv_path(weights_path: Path) -> Path:
    return weights_path.with_suffix(".loss.csv")


def cmd_train(cfg: RunConfig) -> Tuple[Path, Path, FitResult]:
    """Train on every pair of the dataset.

    Writes the weights, their optimizer checkpoint and the per-epoch loss CSV.
    With `resume`, training continues from the checkpoint saved next to the
    resumed weights.
    """
    session = open_dataset(cfg)
    out = Path(require(cfg.output, "--output"))
    pairs = session.load_all()
    if not pairs:
        raise DatasetError(f"Dataset {session.root} has no pairs to train on.")
    start, checkpoint = None, None
    if cfg.resume:
        start = load_weights(cfg.resume, cfg.encoder)
        checkpoint = load_checkpoint(cfg.resume)
        if checkpoint is None:
            logger.warning("No optimizer checkpoint next to %s; epochs restart at 0 with a fresh optimizer", cfg.resume)
        else:
            logger.info("Resuming from %s at epoch %d", cfg.resume, checkpoint.next_epoch)
    result = fit(
        pairs,
        cfg.train,
        cfg.encoder,
        weights=start,
        jobs=cfg.jobs,
        start_epoch=checkpoint.next_epoch if checkpoint else 0,
        state=checkpoint.state if checkpoint else None,
    )
    save_weights(result.weights, out)
    save_checkpoint(TrainingCheckpoint(result.next_epoch, result.state), out)
    losses = loss_csv_path(out)
    write_loss_csv(losses, result.trace)
    logger.info("Saved weights to %s and loss curve to %s", out, losses)
    return out, losses, result


@click.command("train")
@common_options
@click.option("--dataset", default=None, help="Dataset directory written by `generate`.")
@click.option("--output", default=None, help="Weights file to write.")
@click.option("--resume", default=None, help="Weights file to continue from.")
@click.option("--epochs", type=int, default=None)
@click.option("--coam", type=click.Choice(["on", "off"]), default=None, help="Co-attention at the coarse level.")
@handle_errors
def train(config_path: Optional[str], seed, jobs, intrinsics, dataset, output, resume, epochs, coam):
    """Train the descriptor encoder with pose supervision."""
    cfg = load_run_config(
        config_path,
        {
            "seed": seed,
            "jobs": jobs,
            "intrinsics": intrinsics,
            "dataset": dataset,
            "output": output,
            "resume": resume,
            "train.epochs": epochs,
            "encoder.coattention": coam_flag(coam),
        },
    )
    weights, losses, _ = cmd_train(cfg)
    click.echo(f"{weights}\n{losses}")
