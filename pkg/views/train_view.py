import logging

from pydantic import ValidationError

from services import ablation, mafl, sgio
from utils.errors import ConfigError

logger = logging.getLogger(__name__)


def _apply_overrides(cfg, args):
    # Los flags explícitos mandan sobre el fichero de configuración
    for field in ("epochs", "max_steps", "lr"):
        value = getattr(args, field, None)
        if value is None:
            continue
        try:
            setattr(cfg, field, value)
        except ValidationError as exc:
            raise ConfigError(f"--{field.replace('_', '-')}={value}: {exc.errors()[0]['msg']}") from None
    return cfg


# Subcomando train
class TrainView:
    def __init__(self, args, cfg):
        self.args = args
        self.cfg = _apply_overrides(cfg, args)

    def run(self):
        # Cargar el conjunto completo antes de crear el modelo
        dataset = sgio.load_dataset(self.args.data)
        result = mafl.train(dataset, self.cfg, checkpoint_path=self.args.out)

        # Desglose de pérdidas por época, solo si se pidió
        if self.args.log:
            sgio.save_loss_csv(result.curve, self.args.log)
        logger.info("train_done steps=%d final_total=%.6f", len(result.step_losses), result.curve[-1].total)


# Subcomando ablate: una suite predefinida o la completa contra la que apaga módulos
class AblationView:
    def __init__(self, args, cfg):
        self.args = args
        self.cfg = _apply_overrides(cfg, args)

    def specs(self):
        if self.args.disable:
            return ablation.disable_suite(self.args.disable)
        return ablation.SUITES[self.args.suite]

    def run(self):
        # Las combinaciones inválidas fallan antes de leer el conjunto
        specs = self.specs()
        dataset = sgio.load_dataset(self.args.data)
        rows = ablation.run_ablation(dataset, self.cfg, specs)

        # Tabla CSV y una línea de log por configuración
        sgio.save_rows_csv([row.as_dict() for row in rows], self.args.out)
        for row in rows:
            logger.info("ablation config=%s mrank=%.3f final_loss=%.6f", row.name, row.mrank, row.final_loss)
