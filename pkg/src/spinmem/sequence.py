"""Timed event lists: pulses, free-evolution delays and detection windows."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Union

from .pulses import Pulse
from .spin import Transition


@dataclass(frozen=True)
class Delay:
    duration: float

    def __post_init__(self):
        if not self.duration >= 0:
            raise ValueError(f"negative delay {self.duration}")


@dataclass(frozen=True)
class Detect:
    """Sample the coherence of an electron transition for ``window`` seconds."""

    transition: Transition
    window: float

    def __post_init__(self):
        if not self.window > 0:
            raise ValueError(f"detection window must be positive, got {self.window}")
        if self.transition.kind != "electron":
            raise ValueError(f"detection needs an electron transition, got {self.transition.levels}")


Event = Union[Pulse, Delay, Detect]


@dataclass(frozen=True)
class Roles:
    """Which transitions play which part in a memory experiment."""

    electron_qubit: Transition = Transition((1, 2), "mw")
    nuclear_qubit: Transition = Transition((1, 3), "rf")
    transfer_mw: Transition = Transition((1, 2), "mw")

    @classmethod
    def preset(cls, name: str) -> "Roles":
        if name in ("suppA", "supp_a", "default"):
            return cls()
        if name == "fig1":
            return cls(Transition((1, 2), "mw"), Transition((2, 4), "rf"), Transition((1, 2), "mw"))
        raise ValueError(f"unknown role preset {name!r}")


def event_duration(ev: Event) -> float:
    if isinstance(ev, Pulse):
        return ev.effective_duration
    if isinstance(ev, Delay):
        return ev.duration
    return ev.window


@dataclass
class Sequence:
    events: list = field(default_factory=list)
    roles: Roles = field(default_factory=Roles, compare=False)

    def __post_init__(self):
        self.events = list(self.events)
        for ev in self.events:
            if not isinstance(ev, (Pulse, Delay, Detect)):
                raise TypeError(f"not a sequence event: {ev!r}")

    def __add__(self, other: "Sequence | Iterable[Event]") -> "Sequence":
        more = other.events if isinstance(other, Sequence) else list(other)
        return Sequence(self.events + more, self.roles)

    def __len__(self) -> int:
        return len(self.events)

    @property
    def duration(self) -> float:
        return sum(event_duration(ev) for ev in self.events)

    def pulses(self) -> list[Pulse]:
        return [ev for ev in self.events if isinstance(ev, Pulse)]

    def timeline(self) -> list[tuple[float, Event]]:
        """(start time, event) pairs."""
        t = 0.0
        out = []
        for ev in self.events:
            out.append((t, ev))
            t += event_duration(ev)
        return out

    def validate(self) -> None:
        for ev in self.events:
            if isinstance(ev, Pulse):
                ev.transition.validate()

    def map_pulses(self, fn) -> "Sequence":
        return Sequence([fn(ev) if isinstance(ev, Pulse) else ev for ev in self.events], self.roles)

    def with_composite(self, predicate, kind: str = "bb1") -> "Sequence":
        """Swap selected pulses for composite ones, keeping pulse centres fixed.

        The extra length of each composite pulse is taken symmetrically from
        the neighbouring delays; raises if those are too short.
        """
        ev = list(self.events)
        for i, e in enumerate(ev):
            if not (isinstance(e, Pulse) and predicate(e)):
                continue
            new = replace(e, composite=kind)
            extra = new.effective_duration - e.effective_duration
            if extra > 0:
                for j in (i - 1, i + 1):
                    if not (0 <= j < len(ev) and isinstance(ev[j], Delay) and ev[j].duration >= extra / 2):
                        raise ValueError("no room around pulse %d for the composite expansion" % i)
                    ev[j] = Delay(ev[j].duration - extra / 2)
            ev[i] = new
        return Sequence(ev, self.roles)


def gap(center_gap: float, before: float, after: float) -> Delay:
    """Free delay between pulses whose centres are ``center_gap`` apart.

    Rounded to the femtosecond so that accumulated float noise does not
    leak into serialized sequences.
    """
    d = center_gap - 0.5 * (before + after)
    if d < -1e-15:
        raise ValueError(
            f"pulses overlap: centre spacing {center_gap:g} s is shorter than half their lengths"
        )
    return Delay(round(max(d, 0.0), 15))
