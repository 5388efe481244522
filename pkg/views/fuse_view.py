import logging

from models.config_model import RunConfig
from services import sgio
from services.fusenet import FusionModel, fuse_pair

logger = logging.getLogger(__name__)


def resolve_model(path: str | None, cfg: RunConfig) -> FusionModel:
    # Sin checkpoint el modelo se inicializa desde la semilla de la configuración
    if path:
        return FusionModel.load(path, cfg)
    logger.warning("model_fresh seed=%d reason=no_checkpoint", cfg.seed)
    return FusionModel.initialize(cfg)


# Subcomando fuse
class FuseView:
    def __init__(self, args, cfg):
        self.args = args
        self.cfg = cfg

    def run(self):
        # Leer el par de imágenes y sus descripciones
        ir = sgio.load_image(self.args.ir)
        vi = sgio.load_image(self.args.vi)
        annotation = sgio.load_annotation(self.args.annotation)
        regions = sgio.load_regions(self.args.regions)
        model = resolve_model(self.args.model, self.cfg)

        # Fusionar y guardar la imagen (y E si se pidió)
        result = fuse_pair(ir, vi, annotation, regions, model)
        sgio.save_image(result.image, self.args.out)
        if self.args.dump_embedding:
            sgio.save_tensor(result.embedding.E, self.args.dump_embedding)

        # Avisos no fatales del parser o de los subgrafos
        for warning in result.warnings:
            logger.warning("fuse_warning code=%s", warning)
        logger.info("fuse_done out=%s", self.args.out)
