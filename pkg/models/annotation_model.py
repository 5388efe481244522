from pydantic import BaseModel, field_validator

from utils.config import OBJECT_SENTENCES


class TextAnnotation(BaseModel):
    object_level: list[list[str]]
    region_level: list[str]
    global_level: list[str]

    @field_validator("object_level")
    @classmethod
    def check_object_tier(cls, value):
        if len(value) != OBJECT_SENTENCES:
            raise ValueError(
                f"Se esperaban {OBJECT_SENTENCES} frases de objeto, recibidas {len(value)}"
            )
        for sentence in value:
            cls._check_sentence(sentence)
        return value

    @field_validator("region_level", "global_level")
    @classmethod
    def check_sentence(cls, value):
        return cls._check_sentence(value)

    @staticmethod
    def _check_sentence(tokens):
        if not tokens:
            raise ValueError("Frase vacía")
        for token in tokens:
            if not token or token != token.lower() or not token.isalnum():
                raise ValueError(f"Token no normalizado: {token!r}")
        return tokens

    def sentences(self) -> list[list[str]]:
        # Las 5 frases en orden de nivel: obj×3, reg, glob
        return [*self.object_level, self.region_level, self.global_level]

    def to_json_dict(self) -> dict:
        return {
            "object": [" ".join(s) for s in self.object_level],
            "region": " ".join(self.region_level),
            "global": " ".join(self.global_level),
        }
