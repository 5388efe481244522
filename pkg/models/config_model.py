from pydantic import BaseModel, ConfigDict, Field, model_validator

from utils import config
from utils.validators import validate_heads, validate_odd


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    d: int = Field(default=config.EMBED_DIM, ge=4)
    t_iters: int = Field(default=config.T_ITERS, ge=1)
    top_n: int = Field(default=config.TOP_N, ge=1, le=config.OBJECT_SENTENCES)
    lr: float = Field(default=config.LEARNING_RATE, ge=0.0)
    batch: int = Field(default=config.BATCH_SIZE, ge=1)
    epochs: int = Field(default=config.EPOCHS, ge=1)
    max_steps: int | None = Field(default=None, ge=1)
    alpha: float = Field(default=config.ALPHA, ge=0.0)
    beta: float = Field(default=config.BETA, ge=0.0)
    gamma: float = Field(default=config.GAMMA, ge=0.0)
    eta: float = Field(default=config.ETA, ge=0.0)
    seed: int = config.SEED

    channels: int = Field(default=config.CHANNELS, ge=1)
    decoder_channels: int = Field(default=config.DECODER_CHANNELS, ge=1)
    dense_layers: int = Field(default=config.DENSE_LAYERS, ge=1)
    roi_size: int = Field(default=config.ROI_SIZE, ge=1)
    region_channels: int = Field(default=config.REGION_CHANNELS, ge=1)
    heads: int = Field(default=config.HEADS, ge=1)
    gpo_hidden: int | None = Field(default=None, ge=1)
    leaky_slope: float = config.LEAKY_SLOPE
    window: int = config.CONTRAST_WINDOW
    crop: int = Field(default=config.CROP_SIZE, ge=1)
    checkpoint_every: int = Field(default=0, ge=0)
    mi_bins: int = Field(default=config.MI_BINS, ge=2)
    init_scale: float | None = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def check_consistency(self):
        validate_heads(self.d, self.heads)
        validate_odd(self.window, "window")
        return self

    @property
    def hidden(self) -> int:
        return self.gpo_hidden or self.d


class AblationSpec(BaseModel):
    # Ramas y términos de pérdida activos de una configuración

    name: str = "full"
    tsg: bool = True
    vsg: bool = True
    msgha: bool = True
    l_fg: bool = True
    l_bg: bool = True
    l_ctr: bool = True

    @model_validator(mode="after")
    def check_flags(self):
        if not (self.l_fg or self.l_bg):
            raise ValueError("Al menos un término de reconstrucción (L_fg o L_bg) debe quedar activo")
        if self.msgha and not (self.tsg or self.vsg):
            raise ValueError("MSGHA necesita al menos una rama de grafo (TSG o VSG)")
        return self
