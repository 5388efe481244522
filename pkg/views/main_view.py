import argparse
import json
import logging
import sys

from models.config_model import RunConfig
from services import ablation, sgio
from utils.errors import ConfigError, FusionError, MissingFileError
from views.eval_view import EvalView, RankView
from views.fuse_view import FuseView
from views.text_view import TextView
from views.train_view import AblationView, TrainView
from views.visual_view import VisualView

logger = logging.getLogger(__name__)

# Subcomando -> vista que lo ejecuta
VIEWS = {
    "parse-text": TextView,
    "build-vsg": VisualView,
    "fuse": FuseView,
    "train": TrainView,
    "eval": EvalView,
    "rank": RankView,
    "ablate": AblationView,
}


def _global_flags(parser: argparse.ArgumentParser, default):
    parser.add_argument("--seed", type=int, default=default, help="semilla de toda la aleatoriedad")
    parser.add_argument("--config", default=default, help="fichero clave=valor con la RunConfig")
    parser.add_argument("--verbose", action="store_true", default=False if default is None else default,
                        help="logging a nivel DEBUG")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msgfusion",
        description="Fusión infrarrojo/visible guiada por grafos de escena multimodales",
    )
    _global_flags(parser, None)
    # Los flags globales también se aceptan tras el subcomando
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, argparse.SUPPRESS)
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("parse-text", parents=[common], help="frases → grafo de escena textual")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--annotation", help="annotation.json con los 5 niveles")
    source.add_argument("--sentence", help="una frase suelta")
    p.add_argument("--out", help="JSON de salida (por defecto, stdout)")
    p.add_argument("--dot", help="fichero DOT opcional para visualizar")

    p = commands.add_parser("build-vsg", parents=[common], help="regiones → subgrafos visuales")
    p.add_argument("--regions", required=True)
    p.add_argument("--model", help="checkpoint; sin él se inicializa desde la semilla")
    p.add_argument("--out", required=True, help="embeddings de subgrafo (MSGT)")
    p.add_argument("--relations", required=True, help="volcado JSON de relaciones")

    p = commands.add_parser("fuse", parents=[common], help="fusiona un par ir/vi")
    p.add_argument("--ir", required=True)
    p.add_argument("--vi", required=True)
    p.add_argument("--annotation", required=True)
    p.add_argument("--regions", required=True)
    p.add_argument("--model", help="checkpoint; sin él se inicializa desde la semilla")
    p.add_argument("--out", required=True, help="PGM fusionado")
    p.add_argument("--dump-embedding", help="guarda E (MSGT)")

    p = commands.add_parser("train", parents=[common], help="entrena con la pérdida MAFL")
    p.add_argument("--data", required=True, help="manifiesto JSON del conjunto")
    p.add_argument("--out", required=True, help="checkpoint de salida")
    p.add_argument("--log", help="CSV con el desglose de pérdidas por época")
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--lr", type=float)

    p = commands.add_parser("eval", parents=[common], help="métricas por imagen y media")
    p.add_argument("--fused", required=True, help="directorio de PGM fusionados")
    p.add_argument("--ir", required=True, help="directorio de PGM infrarrojos")
    p.add_argument("--vi", required=True, help="directorio de PGM visibles")
    p.add_argument("--out", required=True, help="CSV de salida")

    p = commands.add_parser("rank", parents=[common], help="mRank de una tabla método×métrica")
    table = p.add_mutually_exclusive_group(required=True)
    table.add_argument("--table", help="CSV con columna 'method' y una columna por métrica")
    table.add_argument("--published", choices=["llvip", "tno"], help="tabla publicada de referencia")
    p.add_argument("--lower-better", nargs="*", default=[], help="métricas donde menor es mejor")
    p.add_argument("--out", help="CSV de salida (por defecto, stdout)")

    p = commands.add_parser("ablate", parents=[common], help="tabla de ablación")
    p.add_argument("--data", required=True)
    suite = p.add_mutually_exclusive_group()
    suite.add_argument("--suite", choices=sorted(ablation.SUITES), default="structure")
    suite.add_argument("--disable", nargs="+", choices=ablation.TOGGLES,
                       help="compara la configuración completa con la que apaga estos módulos")
    p.add_argument("--out", required=True, help="CSV de salida")
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-steps", type=int)
    return parser


def configure_logging(verbose: bool):
    # Todo el logging va a stderr; stdout queda para las salidas de datos
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
        stream=sys.stderr,
        force=True,
    )


def resolve_config(args) -> RunConfig:
    # Fichero de configuración y, encima, la semilla de la línea de comandos
    cfg = sgio.load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def report_error(exc: Exception):
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}, ensure_ascii=False), file=sys.stderr)


def main_view(argv: list[str] | None = None) -> int:
    # argparse termina con código 2 ante flags desconocidos o ausentes y 0 con --help
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.verbose)
    try:
        cfg = resolve_config(args)
        VIEWS[args.command](args, cfg).run()
    except (MissingFileError, ConfigError) as exc:
        # Ficheros ausentes y configuración inválida cuentan como errores de uso
        report_error(exc)
        return 2
    except (FusionError, OSError, ValueError, ArithmeticError) as exc:
        logger.debug("command_failed command=%s", args.command, exc_info=True)
        report_error(exc)
        return 1
    return 0
