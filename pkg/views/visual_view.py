import logging

from services import numcore as nc, sgio, vissg
from views.fuse_view import resolve_model

logger = logging.getLogger(__name__)


# Subcomando build-vsg: embeddings de subgrafo y volcado de relaciones
class VisualView:
    def __init__(self, args, cfg):
        self.args = args
        self.cfg = cfg

    def run(self):
        regions = sgio.load_regions(self.args.regions)
        model = resolve_model(self.args.model, self.cfg)
        subgraphs, _, warnings = vissg.build_visual_graph(regions, model.visual, self.cfg.t_iters, self.cfg.top_n)

        # Sin regiones se guarda el token visual nulo
        if subgraphs:
            embeddings = nc.stack([s.embedding for s in subgraphs])
        else:
            embeddings = nc.reshape(model.msgha.null, (1, self.cfg.d))
        sgio.save_tensor(embeddings, self.args.out)

        # Relaciones entre anclas y avisos en JSON
        dump = vissg.relation_dump(regions, [s.anchor for s in subgraphs])
        dump["warnings"] = warnings
        sgio.write_json(dump, self.args.relations)
        logger.info("build_vsg nodes=%d subgraphs=%d", len(regions.boxes), len(subgraphs))
