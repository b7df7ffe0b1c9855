"""Minutia templates and their JSON serialization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field


KINDS = ("ending", "bifurcation")


class TemplateError(Exception):
    pass


@dataclass
class Minutia:
    x: float
    y: float
    angle: float  # radians in [0, 2*pi)
    quality: float  # [0, 1]
    kind: str  # "ending" | "bifurcation"

    def as_dict(self):
        return {
            "x": float(self.x),
            "y": float(self.y),
            "angle": float(self.angle),
            "quality": float(self.quality),
            "kind": self.kind,
        }


@dataclass
class MinutiaTemplate:
    width: int
    height: int
    minutiae: list = field(default_factory=list)

    def __len__(self):
        return len(self.minutiae)

    def validate(self):
        if self.width <= 0 or self.height <= 0:
            raise TemplateError(f"bad extent {self.width}x{self.height}")
        for m in self.minutiae:
            if not (0 <= m.x < self.width and 0 <= m.y < self.height):
                raise TemplateError(
                    f"minutia ({m.x}, {m.y}) outside {self.width}x{self.height}"
                )
            if not (0.0 <= m.angle < 2.0 * math.pi + 1e-9):
                raise TemplateError(f"minutia angle {m.angle} outside [0, 2pi)")
            if not (0.0 <= m.quality <= 1.0):
                raise TemplateError(f"minutia quality {m.quality} outside [0, 1]")
            if m.kind not in KINDS:
                raise TemplateError(f"unknown minutia kind {m.kind!r}")
        return self

    def as_dict(self):
        return {
            "width": int(self.width),
            "height": int(self.height),
            "minutiae": [m.as_dict() for m in self.minutiae],
        }


def save_template(path, template):
    template.validate()
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(template.as_dict(), handle, indent=1)
        handle.write("\n")


def load_template(path):
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    try:
        template = MinutiaTemplate(
            width=int(payload["width"]),
            height=int(payload["height"]),
            minutiae=[
                Minutia(
                    x=float(m["x"]),
                    y=float(m["y"]),
                    angle=float(m["angle"]),
                    quality=float(m["quality"]),
                    kind=str(m["kind"]),
                )
                for m in payload["minutiae"]
            ],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise TemplateError(f"malformed template {path}: {exc}") from exc
    return template.validate()
