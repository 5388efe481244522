from pydantic import BaseModel, ConfigDict

from services.numcore import ParamStore, Tensor


class _Params(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)


class GruParams(_Params):
    W_z: Tensor  # d×e
    W_r: Tensor
    W_h: Tensor
    U_z: Tensor  # d×d
    U_r: Tensor
    U_h: Tensor
    b_z: Tensor  # d
    b_r: Tensor
    b_h: Tensor

    @classmethod
    def create(cls, store: ParamStore, prefix: str, d: int, e: int) -> "GruParams":
        fields = {}
        for gate in ("z", "r", "h"):
            fields[f"W_{gate}"] = store.create(f"{prefix}.W_{gate}", (d, e))
            fields[f"U_{gate}"] = store.create(f"{prefix}.U_{gate}", (d, d))
            fields[f"b_{gate}"] = store.create(f"{prefix}.b_{gate}", (d,), init="zeros")
        return cls(**fields)


class MlpParams(_Params):
    # Dos capas: tanh oculta, salida lineal

    W1: Tensor
    b1: Tensor
    W2: Tensor
    b2: Tensor

    @classmethod
    def create(cls, store: ParamStore, prefix: str, n_in: int, n_hidden: int, n_out: int) -> "MlpParams":
        return cls(
            W1=store.create(f"{prefix}.W1", (n_hidden, n_in)),
            b1=store.create(f"{prefix}.b1", (n_hidden,), init="zeros"),
            W2=store.create(f"{prefix}.W2", (n_out, n_hidden)),
            b2=store.create(f"{prefix}.b2", (n_out,), init="zeros"),
        )


class TextParams(_Params):
    table: Tensor  # |V|×d
    gru: GruParams
    W_g: Tensor  # d×d
    q: Tensor  # 2d
    W_A: Tensor  # d×3d
    W_P: Tensor  # d×3d
    W_p: Tensor  # h×d
    b_p: Tensor  # h
    w_p: Tensor  # h
    null: Tensor  # d
    slope: float = 0.2


class VisualParams(_Params):
    W_roi: Tensor  # d×(C·p·p)
    b_roi: Tensor
    gru_node: GruParams
    gru_edge: GruParams
    v1: Tensor  # 2d
    v2: Tensor
    w1: Tensor
    w2: Tensor
    roi_size: int = 2


class MsghaParams(_Params):
    null: Tensor  # token visual nulo, d
    q_reg: Tensor  # d
    mlp_obj: MlpParams
    mlp_reg: MlpParams
    mlp_glob: MlpParams
    q_cls: Tensor  # d
    W_Q: Tensor  # d×d
    W_K: Tensor
    W_V: Tensor
    W_O: Tensor
    heads: int = 2


class ImageParams(_Params):
    encoder_k: list[Tensor]
    encoder_b: list[Tensor]
    mlp_mu: MlpParams
    mlp_lambda: MlpParams
    W_E: Tensor  # C×d
    b_E: Tensor
    null_E: Tensor  # d
    decoder_k1: Tensor
    decoder_b1: Tensor
    decoder_k2: Tensor
    decoder_b2: Tensor
