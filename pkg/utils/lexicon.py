# Léxico POS cerrado del analizador de frases. Toda palabra fuera de estas
# listas se ignora.

NOUNS = {
    "area", "bag", "bench", "bicycle", "bike", "boy", "bridge", "building",
    "bus", "car", "cat", "child", "corner", "crosswalk", "crowd", "dog",
    "door", "fence", "field", "girl", "grass", "group", "house", "lamp",
    "lane", "light", "man", "motorcycle", "night", "parking", "path",
    "pedestrian", "person", "pole", "road", "scene", "shadow", "sidewalk",
    "sign", "sky", "street", "tree", "truck", "umbrella", "van", "vehicle",
    "wall", "wheel", "window", "woman",
}

IRREGULAR_PLURALS = {
    "people": "person",
    "men": "man",
    "women": "woman",
    "children": "child",
}

ADJECTIVES = {
    "big", "black", "blue", "blurry", "bright", "busy", "cold", "dark",
    "distant", "empty", "gray", "green", "grey", "high", "hot", "large",
    "little", "long", "low", "narrow", "old", "parked", "quiet", "red",
    "round", "short", "silver", "small", "tall", "thermal", "warm", "wet",
    "white", "wide", "yellow", "young",
}

VERBS = {
    "approaching", "carries", "carrying", "crosses", "crossing", "drives",
    "driving", "facing", "follows", "following", "has", "holding", "holds",
    "leaning", "moving", "passes", "passing", "rides", "riding", "runs",
    "running", "sits", "sitting", "stands", "standing", "waiting", "walk",
    "walking", "walks", "wearing",
}

PREPOSITIONS = {
    "above", "across", "along", "around", "at", "behind", "below", "beside",
    "between", "by", "from", "front", "in", "inside", "into", "near", "next",
    "of", "on", "onto", "outside", "over", "past", "through", "to", "toward",
    "towards", "under", "with",
}

NUMERALS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}

PRONOUNS = {"he", "her", "him", "it", "she", "them", "they"}

DETERMINERS = {
    "a", "an", "another", "each", "every", "his", "its", "many", "several",
    "some", "that", "the", "their", "these", "this", "those",
}

AUXILIARIES = {"am", "are", "be", "been", "being", "is", "there", "was", "were"}

CONJUNCTIONS = {"and", "or", "while"}


def _regular_plural(noun: str) -> str:
    if noun.endswith(("s", "x", "ch", "sh")):
        return noun + "es"
    if noun.endswith("y") and noun[-2:-1] not in set("aeiou"):
        return noun[:-1] + "ies"
    return noun + "s"


# plural -> singular
PLURALS = {_regular_plural(n): n for n in NOUNS}
PLURALS.update(IRREGULAR_PLURALS)


def all_words() -> list[str]:
    # Palabras del léxico en orden estable (base del vocabulario)
    words = (
        NOUNS | set(PLURALS) | ADJECTIVES | VERBS | PREPOSITIONS
        | set(NUMERALS) | PRONOUNS | DETERMINERS | AUXILIARIES | CONJUNCTIONS
    )
    return sorted(words)
