import io
import logging
from pathlib import Path

from models.report_model import METRIC_NAMES
from services import metrics, sgio
from utils.errors import MissingFileError

logger = logging.getLogger(__name__)


# Subcomando eval: métricas por imagen y fila media
class EvalView:
    def __init__(self, args, cfg):
        self.args = args
        self.cfg = cfg

    def pairs(self) -> list[tuple[Path, Path, Path]]:
        fused_dir, ir_dir, vi_dir = Path(self.args.fused), Path(self.args.ir), Path(self.args.vi)
        for directory in (fused_dir, ir_dir, vi_dir):
            if not directory.is_dir():
                raise MissingFileError(f"No existe el directorio {directory}")

        # Cada fusionada se empareja por nombre con su ir y su vi
        triples = []
        for fused in sorted(fused_dir.glob("*.pgm")):
            triples.append((fused, ir_dir / fused.name, vi_dir / fused.name))
        if not triples:
            raise MissingFileError(f"No hay imágenes .pgm en {fused_dir}")
        return triples

    def run(self):
        reports = []
        for fused_path, ir_path, vi_path in self.pairs():
            fused = sgio.load_image(fused_path)
            ir = sgio.load_image(ir_path)
            vi = sgio.load_image(vi_path)
            reports.append(metrics.evaluate_fusion(fused, ir, vi, fused_path.stem, self.cfg.mi_bins))

        # La última fila es la media
        reports.append(metrics.aggregate_reports(reports))
        rows = [{"image": r.name, **r.values()} for r in reports]
        sgio.save_rows_csv(rows, self.args.out, ["image", *METRIC_NAMES])
        logger.info("eval_done images=%d", len(reports) - 1)


# Subcomando rank: mRank de una tabla método×métrica
class RankView:
    def __init__(self, args, cfg):
        self.args = args
        self.cfg = cfg

    def run(self):
        # Tabla publicada (con su mRank impreso) o CSV propio
        if self.args.published:
            table, printed = metrics.published_table(self.args.published)
        else:
            table, printed = sgio.load_metric_table(self.args.table), {}
        directions = {metric: False for metric in self.args.lower_better}
        ranks = metrics.mrank(table, directions)

        rows = []
        for method, value in ranks.items():
            row = {"method": method, "mrank": value}
            if printed:
                row["published_mrank"] = printed[method]
            rows.append(row)

        # Sin --out la tabla va a stdout
        if self.args.out:
            sgio.save_rows_csv(rows, self.args.out)
        else:
            buffer = io.StringIO()
            sgio.write_rows_csv(rows, buffer)
            print(buffer.getvalue(), end="")
