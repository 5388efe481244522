import json
import logging
from pathlib import Path

from services import sgio, textsg

logger = logging.getLogger(__name__)


# Subcomando parse-text: frases a grafos de escena en JSON (y DOT)
class TextView:
    def __init__(self, args, cfg):
        self.args = args
        self.cfg = cfg

    def load_sentences(self) -> list[tuple[str, list[str]]]:
        # Una frase suelta o los 5 niveles de la anotación
        if self.args.sentence is not None:
            return [("sentence", sgio.tokenize(self.args.sentence))]
        annotation = sgio.load_annotation(self.args.annotation)
        return list(zip(textsg.TIER_NAMES, annotation.sentences()))

    def run(self):
        # Un grafo por frase, con su nivel y la frase normalizada
        documents, dots = [], []
        for tier, tokens in self.load_sentences():
            graph = textsg.parse_text(tokens)
            documents.append({"tier": tier, "sentence": " ".join(tokens), **sgio.graph_to_dict(graph)})
            dots.append(sgio.graph_to_dot(graph, name=tier))

        # Una frase sola se vuelca sin envoltorio
        payload = documents[0] if len(documents) == 1 else {"tiers": documents}
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        if self.args.out:
            Path(self.args.out).write_text(text, encoding="utf-8")
        else:
            print(text, end="")

        if self.args.dot:
            Path(self.args.dot).write_text("".join(dots), encoding="utf-8")
        logger.info("parse_text graphs=%d", len(documents))
