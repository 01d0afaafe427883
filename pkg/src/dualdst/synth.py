"""Deterministic synthetic corpus: 3 domains, 12 slots, span and picklist mixed.

Small, regular two-turn dialogues that a desk-scale model can overfit within a
few hundred steps, while still exercising every label path: none/dontcare
gates, verbatim span values, and categorical values that never appear in the
context (picklist-only recoveries).
"""

from __future__ import annotations

import random
from pathlib import Path

from .corpus import (
    CATEGORICAL,
    DomainSlotPair,
    NONCATEGORICAL,
    SlotSchema,
    save_dialogues_json,
    save_schema,
)

PRICES = ("cheap", "expensive", "moderate")
AREAS = ("centre", "north", "south")
FOODS = ("chinese", "indian", "italian")
HOTEL_NAMES = ("alpha lodge", "bay view", "cedar house", "delta inn")
PLACES = ("city centre", "kings road", "museum square", "river park")
TIMES = tuple(f"{h:02d}:{m:02d}" for h in (8, 9, 11, 13, 16, 18) for m in (15, 45))
COUNTS = tuple(str(n) for n in range(1, 7))

# fixed dialogue indices for the rarer label paths, so every split size >= 11
# still contains at least one dontcare and one unfound categorical value
_UNFOUND_PRICE_INDEX = 9
_DONTCARE_AREA_INDICES = (3, 21)
_DONTCARE_FOOD_INDEX = 10

_PAIRS = (
    ("hotel", "price range", CATEGORICAL),
    ("hotel", "area", CATEGORICAL),
    ("hotel", "book stay", NONCATEGORICAL),
    ("hotel", "name", NONCATEGORICAL),
    ("restaurant", "food", CATEGORICAL),
    ("restaurant", "area", CATEGORICAL),
    ("restaurant", "book people", NONCATEGORICAL),
    ("restaurant", "book time", NONCATEGORICAL),
    ("taxi", "departure", NONCATEGORICAL),
    ("taxi", "destination", NONCATEGORICAL),
    ("taxi", "leave at", NONCATEGORICAL),
    ("taxi", "arrive by", NONCATEGORICAL),
)


def synthetic_schema() -> SlotSchema:
    pairs = tuple(
        DomainSlotPair(id=i, domain=d, slot=s, kind=k)
        for i, (d, s, k) in enumerate(_PAIRS, start=1)
    )
    return SlotSchema(pairs=pairs)


class _Cycler:
    """Shuffled round-robin draws; guarantees every value appears."""

    def __init__(self, rng: random.Random, values):
        self.rng = rng
        self.pool = list(values)
        self.rng.shuffle(self.pool)
        self.i = 0

    def __call__(self) -> str:
        value = self.pool[self.i % len(self.pool)]
        self.i += 1
        if self.i % len(self.pool) == 0:
            self.rng.shuffle(self.pool)
        return value


def _hotel_dialogue(n: int, pick) -> tuple[list[dict], list[dict]]:
    price, area = pick["price"](), pick["area"]()
    stay, name = pick["count"](), pick["hotel"]()
    if n == _UNFOUND_PRICE_INDEX:
        user = f"i need a low priced hotel in the {area}"
        first = {"hotel-price range": "cheap", "hotel-area": area}
    elif n in _DONTCARE_AREA_INDICES:
        user = f"i need a {price} hotel , any area is fine"
        first = {"hotel-price range": price, "hotel-area": "dontcare"}
    else:
        user = f"i need a {price} hotel in the {area}"
        first = {"hotel-price range": price, "hotel-area": area}
    turns = [
        {"system": "", "user": user},
        {"system": "how long will you stay ?", "user": f"{stay} nights at the {name}"},
    ]
    second = dict(first)
    second.update({"hotel-book stay": stay, "hotel-name": name})
    return turns, [first, second]


def _restaurant_dialogue(n: int, pick) -> tuple[list[dict], list[dict]]:
    food, area = pick["food"](), pick["area"]()
    people, time = pick["count"](), pick["time"]()
    if n == _DONTCARE_FOOD_INDEX:
        user = f"find me a restaurant in the {area} , any food works"
        first = {"restaurant-food": "dontcare", "restaurant-area": area}
    else:
        user = f"find me a {food} restaurant in the {area}"
        first = {"restaurant-food": food, "restaurant-area": area}
    turns = [
        {"system": "", "user": user},
        {
            "system": "what time should i book ?",
            "user": f"a table for {people} people at {time}",
        },
    ]
    second = dict(first)
    second.update({"restaurant-book people": people, "restaurant-book time": time})
    return turns, [first, second]


def _taxi_dialogue(n: int, pick) -> tuple[list[dict], list[dict]]:
    departure, destination = pick["place"](), pick["place"]()
    while destination == departure:
        destination = pick["place"]()
    leave, arrive = pick["time"](), pick["time"]()
    turns = [
        {"system": "", "user": f"i need a taxi from {departure} to {destination}"},
        {
            "system": "when do you travel ?",
            "user": f"leave at {leave} and arrive by {arrive}",
        },
    ]
    first = {"taxi-departure": departure, "taxi-destination": destination}
    second = dict(first)
    second.update({"taxi-leave at": leave, "taxi-arrive by": arrive})
    return turns, [first, second]


_SCRIPTS = (_hotel_dialogue, _restaurant_dialogue, _taxi_dialogue)


def generate_split(split: str, count: int, seed: int) -> list[dict]:
    """Raw dialogue dicts in the on-disk JSON format, cumulative states included."""
    rng = random.Random(f"{seed}-{split}")
    pick = {
        "price": _Cycler(rng, PRICES),
        "area": _Cycler(rng, AREAS),
        "food": _Cycler(rng, FOODS),
        "hotel": _Cycler(rng, HOTEL_NAMES),
        "place": _Cycler(rng, PLACES),
        "time": _Cycler(rng, TIMES),
        "count": _Cycler(rng, COUNTS),
    }
    dialogues = []
    for n in range(count):
        turns, states = _SCRIPTS[n % len(_SCRIPTS)](n, pick)
        dialogues.append(
            {
                "id": f"syn-{split}-{n:03d}",
                "turns": turns,
                "states": [
                    {"turn": t, "slots": slots} for t, slots in enumerate(states, 1)
                ],
            }
        )
    return dialogues


def write_corpus(
    out_dir: str | Path,
    seed: int = 11,
    train: int = 30,
    validation: int = 5,
    test: int = 5,
) -> None:
    """Write {train,validation,test}.json plus the 12-pair schema."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for split, count in (("train", train), ("validation", validation), ("test", test)):
        save_dialogues_json(generate_split(split, count, seed), out_dir / f"{split}.json")
    save_schema(synthetic_schema(), out_dir / "schema.json")


def smoke_config():
    """Training configuration for the 300-step overfit smoke run.

    From-scratch desk training needs a larger batch and learning rate than
    the full-scale fine-tuning defaults; the seed is fixed and validated.
    """
    from .trainer import TrainConfig

    return TrainConfig(
        learning_rate=5e-3,
        batch_size=360,
        max_epochs=150,  # 720 examples / 360 -> 2 steps per epoch, 300 total
        max_len=96,
        seed=13,
        eval_every_iterations=1000,
    )
