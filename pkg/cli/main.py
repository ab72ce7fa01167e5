"""
Command-line entry point

    python -m cli.main train --spec models/lingauss.model --variant elbo --iters 2000
    python -m cli.main graph --spec models/chain.model --observed x
"""

import argparse
import sys
from typing import List, Optional

from cli import commands
from config.settings import DATASETS, REPORT_SAMPLES
from core.errors import AdmpError, ConfigurationError, GraphError, SpecParseError, TrainingAborted
from objectives.variants import ObjectiveVariant
from utils.logging_utils import configure_logging, get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_ABORTED = 3

VARIANT_NAMES = [v.value for v in ObjectiveVariant]


def _add_model_flags(parser: argparse.ArgumentParser, spec_required: bool = True) -> None:
    parser.add_argument("--spec", required=spec_required, help="model-spec file")
    parser.add_argument("--observed", default=None, help="comma-separated observed variables (overrides roles)")


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", default=None, help=f"CSV file; default is the model file's dataset ({', '.join(DATASETS)})")
    parser.add_argument("--data-size", type=int, default=None, help="rows of a generated toy dataset")


def _add_training_flags(parser: argparse.ArgumentParser, variant_default: Optional[str] = None) -> None:
    parser.add_argument("--variant", choices=VARIANT_NAMES, default=variant_default, help="learning variant")
    parser.add_argument("--iters", type=int, default=None, help="total iterations")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--minibatch", type=int, default=None)
    parser.add_argument("--particles-L", dest="particles_l", type=int, default=None, help="bottom-up draws per datum")
    parser.add_argument("--particles-K", dest="particles_k", type=int, default=None, help="top-down draws per iteration")
    parser.add_argument("--nd", type=int, default=None, help="adversary steps per update unit")
    parser.add_argument("--lr-theta", type=float, default=None)
    parser.add_argument("--lr-phi", type=float, default=None)
    parser.add_argument("--lr-xi", type=float, default=None)
    parser.add_argument("--optimizer", choices=("adam", "sgd"), default=None)
    parser.add_argument("--mask-policy", default=None, help="full | missing | drop:<p>")
    parser.add_argument("--metrics-every", type=int, default=None)
    parser.add_argument("--non-saturating", action="store_true", help="non-saturating generator losses")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="admp", description="Adversarial message passing for directed generative models")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")
    parser.add_argument("--log-file", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a model with one variant")
    _add_model_flags(train, spec_required=False)
    _add_data_flags(train)
    _add_training_flags(train, variant_default=ObjectiveVariant.ADMP_JSD_LOC.value)
    train.add_argument("--out", default=None, help="run directory")
    train.add_argument("--manifest", default=None, help="repeat the run a manifest.json describes")
    train.add_argument("--resume", default=None, help="checkpoint to continue from")
    train.add_argument("--checkpoint-every", type=int, default=0, help="also checkpoint every N steps")
    train.add_argument("--mmd-samples", type=int, default=0, help="add model/data MMD^2 to metric rows")
    train.add_argument("--plot", action="store_true", help="render metrics.png")
    train.add_argument("--quiet", action="store_true", help="no progress bar")
    train.set_defaults(handler=commands.cmd_train)

    evaluate = sub.add_parser("eval", help="posterior-recovery report for a checkpoint")
    _add_model_flags(evaluate)
    _add_data_flags(evaluate)
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--out", default=None, help="report directory (default: the checkpoint's)")
    evaluate.add_argument("--samples", type=int, default=REPORT_SAMPLES)
    evaluate.add_argument("--plot", action="store_true", help="render posterior.png")
    evaluate.set_defaults(handler=commands.cmd_eval)

    graph = sub.add_parser("graph", help="print the inverse factorization and a dot export")
    _add_model_flags(graph)
    graph.add_argument("--dot", default=None, help="write the dot export here instead of stdout")
    graph.set_defaults(handler=commands.cmd_graph)

    gradcheck = sub.add_parser("gradcheck", help="finite differences against backward() per parameter group")
    _add_model_flags(gradcheck)
    _add_data_flags(gradcheck)
    _add_training_flags(gradcheck, variant_default=ObjectiveVariant.ADMP_JSD_LOC.value)
    gradcheck.add_argument("--corrupt-group", choices=("theta", "phi", "xi"), default=None,
                           help=argparse.SUPPRESS)
    gradcheck.set_defaults(handler=commands.cmd_gradcheck)

    compare = sub.add_parser("compare", help="variant x seed summary table")
    _add_model_flags(compare)
    _add_data_flags(compare)
    _add_training_flags(compare)
    compare.add_argument("--variants", default=None, help="comma-separated variants (default: gan, global-biadv, "
                                                          "admp-jsdloc, admp-kl-tractable)")
    compare.add_argument("--seeds", default=None, help="comma-separated seeds")
    compare.add_argument("--out", default=None)
    compare.set_defaults(handler=commands.cmd_compare)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand

    Returns:
        0 success, 1 engine error, 2 usage/parse/configuration error, 3 training aborted
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level, args.log_file)
    try:
        return args.handler(args)
    except TrainingAborted as exc:
        logger.error("[cli] %s", exc)
        return EXIT_ABORTED
    except (SpecParseError, ConfigurationError, GraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AdmpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
