import logging

from pydantic import BaseModel, ConfigDict

from models.annotation_model import TextAnnotation
from models.config_model import AblationSpec, RunConfig
from models.graph_model import FusedEmbedding, TokenSequence
from models.image_model import ImageGray, RegionSet
from models.params_model import ImageParams, MlpParams, MsghaParams, TextParams, VisualParams
from models.vocabulary_model import Vocabulary
from services import msgha, numcore as nc, sgio, textsg, vissg
from services.numcore import ParamStore, Tensor
from utils.errors import ShapeError

logger = logging.getLogger(__name__)


def init_image_params(store: ParamStore, cfg: RunConfig, prefix: str = "image") -> ImageParams:
    c, d = cfg.channels, cfg.d
    encoder_k, encoder_b = [], []
    for layer in range(cfg.dense_layers):
        in_ch = 1 + layer * c
        encoder_k.append(store.create(f"{prefix}.encoder{layer}.k", (c, in_ch, 3, 3)))
        encoder_b.append(store.create(f"{prefix}.encoder{layer}.b", (c,), init="zeros"))
    return ImageParams(
        encoder_k=encoder_k,
        encoder_b=encoder_b,
        mlp_mu=MlpParams.create(store, f"{prefix}.mlp_mu", c, c, c),
        mlp_lambda=MlpParams.create(store, f"{prefix}.mlp_lambda", c, c, c),
        W_E=store.create(f"{prefix}.W_E", (c, d)),
        b_E=store.create(f"{prefix}.b_E", (c,), init="zeros"),
        null_E=store.create(f"{prefix}.null_E", (d,)),
        decoder_k1=store.create(f"{prefix}.decoder.k1", (cfg.decoder_channels, c, 3, 3)),
        decoder_b1=store.create(f"{prefix}.decoder.b1", (cfg.decoder_channels,), init="zeros"),
        decoder_k2=store.create(f"{prefix}.decoder.k2", (1, cfg.decoder_channels, 3, 3)),
        decoder_b2=store.create(f"{prefix}.decoder.b2", (1,), init="zeros"),
    )


class FusionModel(BaseModel):
    # Todos los parámetros del modelo más la configuración que los dimensiona

    model_config = ConfigDict(arbitrary_types_allowed=True)

    cfg: RunConfig
    vocab: Vocabulary
    store: ParamStore
    text: TextParams
    visual: VisualParams
    msgha: MsghaParams
    image: ImageParams
    ablation: AblationSpec = AblationSpec()

    @classmethod
    def initialize(cls, cfg: RunConfig, ablation: AblationSpec | None = None,
                   seed: int | None = None) -> "FusionModel":
        store = ParamStore(cfg.seed if seed is None else seed, cfg.init_scale)
        vocab = Vocabulary.from_lexicon()
        model = cls(
            cfg=cfg,
            vocab=vocab,
            store=store,
            text=textsg.init_params(store, vocab, cfg.d, cfg.hidden, cfg.leaky_slope),
            visual=vissg.init_params(store, cfg.region_channels, cfg.d, cfg.roi_size),
            msgha=msgha.init_params(store, cfg.d, cfg.heads),
            image=init_image_params(store, cfg),
            ablation=ablation or AblationSpec(),
        )
        logger.info("model_initialized params=%d scalars=%d ablation=%s",
                    len(store), model.num_scalars(), model.ablation.name)
        return model

    @classmethod
    def load(cls, path, cfg: RunConfig, ablation: AblationSpec | None = None) -> "FusionModel":
        model = cls.initialize(cfg, ablation)
        model.store.load_state_dict(sgio.load_checkpoint(path))
        return model

    def save(self, path) -> None:
        sgio.save_checkpoint(self.store.state_dict(), path)

    def parameters(self) -> list[tuple[str, Tensor]]:
        # Parámetros en orden de registro (orden fijo del optimizador)
        return self.store.items()

    def num_scalars(self) -> int:
        return int(sum(t.size for t in self.store.tensors()))


class FusionResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    image: ImageGray
    embedding: FusedEmbedding
    warnings: list[str] = []


# --- Red de imagen ---

def _conv_bias(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    return nc.add(nc.conv2d(x, kernel), nc.reshape(bias, (bias.shape[0], 1, 1)))


def encode_image(img: Tensor, params: ImageParams) -> Tensor:
    # Codificador denso: cada capa ve la imagen y todas las salidas previas
    features = [img]
    out = img
    for kernel, bias in zip(params.encoder_k, params.encoder_b):
        out = nc.tanh(_conv_bias(nc.concat(features, axis=0), kernel, bias))
        features.append(out)
    return out


def _pixel_mlp(volume: Tensor, params: MlpParams) -> Tensor:
    c, h, w = volume.shape
    return nc.reshape(nc.mlp(nc.reshape(volume, (c, h * w)), params), (c, h, w))


def affine_params(psi_ir: Tensor, psi_vi: Tensor, params: ImageParams) -> tuple[Tensor, Tensor]:
    if psi_ir.shape != psi_vi.shape:
        raise ShapeError(f"Volúmenes de forma distinta: ir {psi_ir.shape}, vi {psi_vi.shape}")
    return _pixel_mlp(psi_ir, params.mlp_mu), _pixel_mlp(psi_vi, params.mlp_lambda)


def project_embedding(E: Tensor, params: ImageParams) -> Tensor:
    return nc.linear(params.W_E, nc.reshape(E, (E.size,)), params.b_E)


def fuse_features(mu: Tensor, lam: Tensor, E: Tensor, params: ImageParams) -> Tensor:
    # ψ_f = μ ⊙ proj(E) + λ, con proj(E) difundido sobre H×W
    p = project_embedding(E, params)
    return nc.add(nc.hadamard(mu, nc.reshape(p, (p.shape[0], 1, 1))), lam)


def decode_image(psi_f: Tensor, params: ImageParams) -> Tensor:
    hidden = nc.tanh(_conv_bias(psi_f, params.decoder_k1, params.decoder_b1))
    return nc.sigmoid(_conv_bias(hidden, params.decoder_k2, params.decoder_b2))


# --- Ramas de grafo ---

def _mean_token(sequences: list[TokenSequence]) -> Tensor:
    rows = nc.concat([s.tokens for s in sequences], axis=0)
    return nc.reshape(nc.mean(rows, axis=0), (1, rows.shape[1]))


def scene_embedding(annotation: TextAnnotation, regions: RegionSet,
                    model: FusionModel) -> tuple[FusedEmbedding, list[str]]:
    # E a partir de ambos grafos; las ramas desactivadas usan su token nulo
    spec, cfg = model.ablation, model.cfg
    warnings: list[str] = []
    text = visual = None
    if spec.tsg:
        text = textsg.embed_annotation(annotation, model.vocab, model.text)
        warnings.extend(text.warnings)
    if spec.vsg:
        subgraphs, _, vsg_warnings = vissg.build_visual_graph(regions, model.visual, cfg.t_iters, cfg.top_n)
        warnings.extend(vsg_warnings)
        visual = msgha.reconstruct_visual(subgraphs, model.msgha)
        warnings.extend(visual.warnings)
    if spec.msgha:
        if text is None:
            text = msgha.null_sequence(model.text.null)
        if visual is None:
            visual = msgha.null_sequence(model.msgha.null)
        return msgha.cls_attend(msgha.tier_fuse(visual, text, model.msgha), model.msgha), warnings
    enabled = [s for s in (visual, text) if s is not None]
    if not enabled:
        return FusedEmbedding(E=nc.reshape(model.image.null_E, (1, cfg.d))), warnings
    return FusedEmbedding(E=_mean_token(enabled)), warnings


def forward(ir: Tensor, vi: Tensor, annotation: TextAnnotation, regions: RegionSet,
            model: FusionModel) -> tuple[Tensor, FusedEmbedding, list[str]]:
    # Tubería completa sobre tensores [1×H×W]; devuelve Î_f [1×H×W]
    if ir.shape != vi.shape:
        raise ShapeError(f"Imágenes de tamaño distinto: ir {ir.shape}, vi {vi.shape}")
    psi_ir = encode_image(ir, model.image)
    psi_vi = encode_image(vi, model.image)
    embedding, warnings = scene_embedding(annotation, regions, model)
    mu, lam = affine_params(psi_ir, psi_vi, model.image)
    fused = decode_image(fuse_features(mu, lam, embedding.E, model.image), model.image)
    return fused, embedding, warnings


def fuse_pair(ir: ImageGray, vi: ImageGray, annotation: TextAnnotation, regions: RegionSet,
              model: FusionModel) -> FusionResult:
    fused, embedding, warnings = forward(ir.to_tensor(), vi.to_tensor(), annotation, regions, model)
    image = ImageGray.from_tensor(fused)
    logger.info("fused size=%dx%d warnings=%d", image.width, image.height, len(warnings))
    return FusionResult(image=image, embedding=embedding, warnings=warnings)
