"""Synthetic streaming-document set with planted needles.

Every document describes one invented person surrounded by filler drawn from a
shared vocabulary, so documents look alike to a bag-of-words reader.  Needles
are facts that only one document carries (a uniquely named object and the city
it is kept in, or a colleague link).  Questions are answered by one needle
document, or by two: the person named in the question links to a colleague
whose document holds the object.  Supporting doc ids are written with each
question so routing recall can be scored.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

_SYLLABLES = (
    "ka", "lo", "mi", "ren", "tas", "vo", "del", "mar", "qui", "zen", "bra", "fol",
    "gri", "hal", "jus", "nor", "pel", "sut", "tor", "ul", "wex", "yor", "cam", "dru",
)
_CITIES = (
    "Aberdeen", "Bergen", "Cordoba", "Dresden", "Eindhoven", "Fukuoka", "Galway",
    "Hobart", "Innsbruck", "Jaipur", "Kraków", "Lyon", "Medellín", "Nagoya", "Oaxaca",
    "Porto", "Quebec", "Rotterdam", "Seville", "Tbilisi", "Utrecht", "Valletta",
    "Windhoek", "Yerevan", "Zagreb",
)
_COLORS = ("amber", "cobalt", "crimson", "ivory", "jade", "ochre", "scarlet", "teal", "violet", "umber")
_OBJECTS = (
    "astrolabe", "barometer", "chronometer", "dulcimer", "easel", "fiddle", "gyroscope",
    "harpsichord", "inkwell", "jukebox", "kaleidoscope", "lantern", "metronome", "nautilus",
    "ocarina", "periscope", "quadrant", "rucksack", "sextant", "tambourine", "ukulele",
    "valise", "windlass", "xylophone", "yardstick", "zither", "abacus", "bellows", "compass",
    "decanter", "epergne", "flagon", "gramophone", "hourglass", "ironstone", "jigsaw",
    "kettledrum", "lorgnette", "mandolin", "needlepoint", "orrery", "planisphere",
    "quill", "reliquary", "samovar", "telescope", "urn", "vielle", "whetstone", "yoke",
    "zoetrope", "accordion", "bassoon", "cithara", "dreidel", "euphonium", "fresco",
    "gong", "harmonium", "icon", "jerkin", "kazoo", "lute", "marimba",
)
_FILLER = (
    "The {noun} near the {place} was busy every {time}.",
    "Friends often talked about the {noun} and the {place}.",
    "During the {time} the weather around the {place} changed quickly.",
    "Neighbours remember a long walk past the {place} one {time}.",
    "The local paper once printed a story about a {noun}.",
    "People in the {place} said the {noun} was worth seeing.",
    "A small festival took place at the {place} that {time}.",
    "Most visitors came for the {noun} rather than the {place}.",
)
_NOUNS = ("market", "bridge", "garden", "library", "harbour", "museum", "bakery", "station", "choir", "ferry")
_PLACES = ("old town", "river bank", "hill road", "square", "north gate", "coast path", "valley")
_TIMES = ("spring", "summer", "autumn", "winter", "weekend", "evening", "morning")


@dataclass(frozen=True)
class NeedleDoc:
    doc_id: str
    title: str
    text: str


def _names(rng: random.Random, n: int) -> list[str]:
    seen: set[str] = set()
    out = []
    while len(out) < n:
        first = "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 3))).capitalize()
        last = "".join(rng.choice(_SYLLABLES) for _ in range(3)).capitalize()
        name = f"{first} {last}"
        if name not in seen:
            seen.add(name)
            out.append(name)
    return out


def _filler(rng: random.Random, n: int) -> list[str]:
    return [
        rng.choice(_FILLER).format(noun=rng.choice(_NOUNS), place=rng.choice(_PLACES), time=rng.choice(_TIMES))
        for _ in range(n)
    ]


def generate_needle_dataset(n_docs: int = 100, n_questions: int = 50, seed: int = 0, two_hop_share: float = 0.5) -> dict:
    """Return a streaming-docs dataset dict (``docs`` and ``qa``)."""
    if n_questions > n_docs or n_questions > len(_OBJECTS):
        raise ValueError("need at least one document and one distinct object per question")
    rng = random.Random(seed)
    names = _names(rng, n_docs)
    sentences = {i: _filler(rng, rng.randint(4, 7)) for i in range(n_docs)}
    objects = rng.sample(_OBJECTS, n_questions)
    holders = rng.sample(range(n_docs), n_questions)
    n_two = int(round(n_questions * two_hop_share))
    qa = []
    for q, (holder, obj) in enumerate(zip(holders, objects)):
        color = rng.choice(_COLORS)
        city = rng.choice(_CITIES)
        holder_name = names[holder]
        fact = f"{holder_name} keeps the {color} {obj} in {city}."
        sentences[holder].insert(rng.randint(0, len(sentences[holder])), fact)
        if q < n_two:
            linker = rng.choice([i for i in range(n_docs) if i != holder])
            link = f"{names[linker]} works closely with {holder_name}."
            sentences[linker].insert(rng.randint(0, len(sentences[linker])), link)
            question = f"Where does the colleague of {names[linker]} keep the {color} {obj}?"
            support = [f"doc{linker:04d}", f"doc{holder:04d}"]
            category = "multi_hop"
        else:
            question = f"Where does {holder_name} keep the {color} {obj}?"
            support = [f"doc{holder:04d}"]
            category = "single_hop"
        qa.append({"question": question, "answers": [city], "supporting_doc_ids": support, "category": category})
    docs = [
        {"doc_id": f"doc{i:04d}", "title": names[i], "text": " ".join(sentences[i])}
        for i in range(n_docs)
    ]
    return {"docs": docs, "qa": qa}


def write_needle_dataset(path: str | Path, **kwargs) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(generate_needle_dataset(**kwargs), ensure_ascii=False, indent=1) + "\n", encoding="utf-8")
    return path
