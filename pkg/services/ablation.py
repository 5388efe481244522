import logging

from pydantic import ValidationError

from models.config_model import AblationSpec, RunConfig
from models.dataset_model import Sample
from models.report_model import AblationRow
from services import fusenet, mafl, metrics
from utils.errors import ConfigError

logger = logging.getLogger(__name__)


def make_spec(name: str, **flags) -> AblationSpec:
    try:
        return AblationSpec(name=name, **flags)
    except ValidationError as exc:
        raise ConfigError(f"Ablación '{name}' inválida: {exc.errors()[0]['msg']}") from None


# Progresión estructural: baseline, +TSG, +MSGHA, +VSG
STRUCTURE_SUITE = (
    make_spec("baseline", tsg=False, vsg=False, msgha=False),
    make_spec("+TSG", tsg=True, vsg=False, msgha=False),
    make_spec("+MSGHA", tsg=True, vsg=False, msgha=True),
    make_spec("+VSG", tsg=True, vsg=True, msgha=True),
)

# Progresión de términos de pérdida
LOSS_SUITE = (
    make_spec("L_fg", l_fg=True, l_bg=False, l_ctr=False),
    make_spec("L_bg", l_fg=False, l_bg=True, l_ctr=False),
    make_spec("L_fg+L_bg", l_fg=True, l_bg=True, l_ctr=False),
    make_spec("L_fg+L_bg+L_ctr", l_fg=True, l_bg=True, l_ctr=True),
)

SUITES = {"structure": STRUCTURE_SUITE, "loss": LOSS_SUITE}

# Flags que se pueden desactivar desde la línea de comandos
TOGGLES = ("tsg", "vsg", "msgha", "l_fg", "l_bg", "l_ctr")


def disable_suite(flags: list[str]) -> tuple[AblationSpec, AblationSpec]:
    # Configuración completa frente a la misma sin los módulos indicados
    unknown = sorted(set(flags) - set(TOGGLES))
    if not flags or unknown:
        raise ConfigError(f"Flags de ablación desconocidos o vacíos: {unknown}")
    name = "-" + "-".join(dict.fromkeys(flags))
    return make_spec("full"), make_spec(name, **{flag: False for flag in flags})


def evaluate_model(dataset: list[Sample], model: fusenet.FusionModel):
    reports = []
    for sample in dataset:
        result = fusenet.fuse_pair(sample.ir, sample.vi, sample.annotation, sample.regions, model)
        reports.append(metrics.evaluate_fusion(result.image, sample.ir, sample.vi, sample.name, model.cfg.mi_bins))
    return metrics.aggregate_reports(reports)


def run_ablation(dataset: list[Sample], base_cfg: RunConfig,
                 specs: tuple[AblationSpec, ...] | list[AblationSpec] = STRUCTURE_SUITE) -> list[AblationRow]:
    # Entrena y evalúa cada configuración con la misma semilla y pasos
    dataset = [mafl.crop_sample(s, base_cfg.crop) for s in dataset]
    rows = []
    for spec in specs:
        logger.info("ablation_start config=%s", spec.name)
        result = mafl.train(dataset, base_cfg, spec)
        final_loss = result.step_losses[-1] if result.step_losses else 0.0
        rows.append(AblationRow(name=spec.name, report=evaluate_model(dataset, result.model), final_loss=final_loss))
    if len(rows) >= 2:
        ranks = metrics.mrank({row.name: row.report.values() for row in rows})
        rows = [row.model_copy(update={"mrank": ranks[row.name]}) for row in rows]
    return rows
