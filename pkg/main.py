from dotenv import load_dotenv
load_dotenv()

import click

from routers.evaluate import evaluate as eval_command
from routers.generate import generate as generate_command
from routers.match import match as match_command
from routers.reports import report as report_command
from routers.train import train as train_command
from utils.log import configure_logging


@click.group()
@click.option("--log-level", default=None, help="Overrides SONIC_KIT_LOG for this run.")
def cli(log_level):
    """Pose-supervised sonar feature correspondence toolkit."""
    configure_logging(log_level)


cli.add_command(generate_command)
cli.add_command(train_command)
cli.add_command(match_command)
cli.add_command(eval_command)
cli.add_command(report_command)


if __name__ == "__main__":
    cli()
