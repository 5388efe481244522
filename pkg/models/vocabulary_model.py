from pydantic import BaseModel, PrivateAttr, field_validator

from utils.lexicon import all_words

UNKNOWN = "<unk>"


class Vocabulary(BaseModel):
    # Mapa palabra→índice; el índice 0 queda reservado a palabras desconocidas

    words: list[str]
    _index: dict[str, int] = PrivateAttr(default_factory=dict)

    @field_validator("words")
    @classmethod
    def check_words(cls, value):
        if not value or value[0] != UNKNOWN:
            raise ValueError(f"La primera entrada debe ser {UNKNOWN}")
        if len(set(value)) != len(value):
            raise ValueError("Palabras repetidas en el vocabulario")
        return value

    def model_post_init(self, __context) -> None:
        self._index = {word: i for i, word in enumerate(self.words)}

    @classmethod
    def from_lexicon(cls) -> "Vocabulary":
        return cls(words=[UNKNOWN, *all_words()])

    def index(self, word: str) -> int:
        return self._index.get(word, 0)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self._index
