import logging
import math

from models.graph_model import FusedEmbedding, SubGraphEmbedding, TokenSequence
from models.params_model import MlpParams, MsghaParams
from services import numcore as nc
from services.numcore import ParamStore, Tensor
from utils.config import OBJECT_SENTENCES, TIER_TAGS
from utils.errors import ContractError
from utils.validators import validate_heads

logger = logging.getLogger(__name__)

EMPTY_VISUAL = "EMPTY_VISUAL"


def init_params(store: ParamStore, d: int, heads: int = 2, prefix: str = "msgha") -> MsghaParams:
    validate_heads(d, heads)
    return MsghaParams(
        null=store.create(f"{prefix}.null", (d,)),
        q_reg=store.create(f"{prefix}.q_reg", (d,)),
        mlp_obj=MlpParams.create(store, f"{prefix}.mlp_obj", 2 * d, 2 * d, d),
        mlp_reg=MlpParams.create(store, f"{prefix}.mlp_reg", 2 * d, 2 * d, d),
        mlp_glob=MlpParams.create(store, f"{prefix}.mlp_glob", 2 * d, 2 * d, d),
        q_cls=store.create(f"{prefix}.q_cls", (d,)),
        W_Q=store.create(f"{prefix}.W_Q", (d, d)),
        W_K=store.create(f"{prefix}.W_K", (d, d)),
        W_V=store.create(f"{prefix}.W_V", (d, d)),
        W_O=store.create(f"{prefix}.W_O", (d, d)),
        heads=heads,
    )


def null_sequence(null: Tensor) -> TokenSequence:
    return TokenSequence(tokens=nc.stack([null] * len(TIER_TAGS)))


def region_weights(x: Tensor, q_reg: Tensor) -> Tensor:
    # softmax(X·q_reg/√d) sobre las k subgrafos
    k, d = x.shape
    scores = nc.reshape(nc.matmul(x, nc.reshape(q_reg, (d, 1))), (k,))
    return nc.softmax_rows(nc.scale(scores, 1.0 / math.sqrt(d)))


def reconstruct_visual(subgraphs: list[SubGraphEmbedding], params: MsghaParams) -> TokenSequence:
    if len(subgraphs) > OBJECT_SENTENCES:
        raise ContractError(
            f"Se admiten como mucho {OBJECT_SENTENCES} subgrafos, recibidos {len(subgraphs)}"
        )
    if not subgraphs:
        logger.warning("visual_tokens_null reason=no_subgraphs")
        sequence = null_sequence(params.null)
        sequence.warnings.append(EMPTY_VISUAL)
        return sequence
    embeddings = [s.embedding for s in subgraphs]
    v_obj = embeddings + [params.null] * (OBJECT_SENTENCES - len(embeddings))
    x = nc.stack(embeddings)
    v_reg = nc.linear(nc.transpose(x), region_weights(x, params.q_reg))
    v_glob = nc.mean(x, axis=0)
    return TokenSequence(tokens=nc.stack([*v_obj, v_reg, v_glob]))


def _tier_mlp(params: MsghaParams, tag: str) -> MlpParams:
    return {"obj": params.mlp_obj, "reg": params.mlp_reg, "glob": params.mlp_glob}[tag]


def tier_fuse(visual: TokenSequence, text: TokenSequence, params: MsghaParams) -> TokenSequence:
    if visual.tokens.shape != text.tokens.shape:
        raise ContractError(
            f"Secuencias de ancho distinto: visual {visual.tokens.shape}, texto {text.tokens.shape}"
        )
    fused = []
    for k, tag in enumerate(TIER_TAGS):
        pair = nc.concat([nc.getitem(visual.tokens, k), nc.getitem(text.tokens, k)])
        fused.append(nc.mlp(pair, _tier_mlp(params, tag)))
    return TokenSequence(tokens=nc.stack(fused), warnings=[*visual.warnings, *text.warnings])


def cls_attend(fused: TokenSequence, params: MsghaParams) -> FusedEmbedding:
    # Atención multi-cabeza con la consulta CLS sobre los 5 tokens
    d = fused.tokens.shape[1]
    validate_heads(d, params.heads)
    width = d // params.heads
    q = nc.matmul(nc.reshape(params.q_cls, (1, d)), params.W_Q)  # [1×d]
    k = nc.matmul(fused.tokens, params.W_K)  # [5×d]
    v = nc.matmul(fused.tokens, params.W_V)
    outputs, weights = [], []
    for head in range(params.heads):
        cols = (slice(None), slice(head * width, (head + 1) * width))
        q_h, k_h, v_h = nc.getitem(q, cols), nc.getitem(k, cols), nc.getitem(v, cols)
        scores = nc.scale(nc.matmul(q_h, nc.transpose(k_h)), 1.0 / math.sqrt(width))
        alpha = nc.softmax_rows(scores)  # [1×5]
        weights.append(alpha.numpy().reshape(-1))
        outputs.append(nc.matmul(alpha, v_h))
    E = nc.matmul(nc.concat(outputs, axis=1), params.W_O)
    return FusedEmbedding(E=E, weights=weights)
