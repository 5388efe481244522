import math

from pydantic import BaseModel, Field, model_validator


class LossBreakdown(BaseModel):
    l_fg: float = Field(ge=0.0)
    l_bg: float = Field(ge=0.0)
    l_rec: float = Field(ge=0.0)
    l_ctr: float = Field(ge=0.0)
    total: float = Field(ge=0.0)

    @model_validator(mode="after")
    def check_identities(self):
        if abs(self.l_rec - (self.l_fg + self.l_bg)) > 1e-12 * max(1.0, self.l_rec):
            raise ValueError("l_rec debe ser l_fg + l_bg")
        if abs(self.total - (self.l_rec + self.l_ctr)) > 1e-12 * max(1.0, self.total):
            raise ValueError("total debe ser l_rec + l_ctr")
        return self

    @classmethod
    def from_terms(cls, l_fg: float, l_bg: float, l_ctr: float) -> "LossBreakdown":
        l_rec = l_fg + l_bg
        return cls(l_fg=l_fg, l_bg=l_bg, l_rec=l_rec, l_ctr=l_ctr, total=l_rec + l_ctr)


class MetricReport(BaseModel):
    name: str = ""
    ag: float = Field(ge=0.0)
    sf: float = Field(ge=0.0)
    psnr: float
    mi: float = Field(ge=0.0)
    ssim: float = Field(ge=-1.0, le=1.0)
    qabf: float = Field(ge=0.0, le=1.0)

    @model_validator(mode="after")
    def check_psnr(self):
        if not math.isfinite(self.psnr):
            raise ValueError("psnr debe ser finito (centinela para MSE nulo)")
        return self

    def values(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in METRIC_NAMES}


METRIC_NAMES = ("qabf", "ssim", "ag", "sf", "mi", "psnr")


class AblationRow(BaseModel):
    # Fila de la tabla de ablación: configuración, mRank y métricas medias

    name: str
    mrank: float = 0.0
    report: MetricReport
    final_loss: float = Field(ge=0.0)

    def as_dict(self) -> dict[str, float | str]:
        return {"config": self.name, "mrank": self.mrank, **self.report.values(), "final_loss": self.final_loss}
