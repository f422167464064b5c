"""Call counters used to assert that evaluation never augments."""

from __future__ import annotations

from collections import Counter

counters: Counter[str] = Counter()


def bump(name: str) -> None:
    counters[name] += 1


def snapshot() -> dict[str, int]:
    return dict(counters)


def reset() -> None:
    counters.clear()
