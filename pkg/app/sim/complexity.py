# -*- coding: utf-8 -*-
"""
Arithmetic cost of the cosine-similarity alignment loss, global versus
over the two window tilings.

Per grid cell the cost model charges 3C + 2 multiplications, 3C - 1
additions, 2 square roots and 1 division: the channel dot product and both
squared norms, the norm product, the normalisation and the squared error.
"""

from dataclasses import asdict, dataclass

from ..exceptions import ValidationError
from ..temporal import window_partition

MODES = ("global", "blockwise")


@dataclass
class OpCounter:
    mul: int = 0
    add: int = 0
    sqrt: int = 0
    div: int = 0

    def charge(self, mul=0, add=0, sqrt=0, div=0):
        self.mul += int(mul)
        self.add += int(add)
        self.sqrt += int(sqrt)
        self.div += int(div)

    def to_json(self):
        return asdict(self)


def per_cell(channels):
    return OpCounter(3 * channels + 2, 3 * channels - 1, 2, 1)


def count_similarity_ops(channels, height, width, l=16, mode="global"):
    if min(channels, height, width) < 1:
        raise ValidationError("dims must be positive, got %s" % ((channels, height, width),))
    if mode not in MODES:
        raise ValidationError("mode must be one of %s, got %r" % (MODES, mode))
    if mode == "global":
        cells = height * width
    else:
        w1, w2 = window_partition(height, width, l)
        cells = (len(w1) + len(w2)) * l * l
    unit = per_cell(channels)
    return OpCounter(unit.mul * cells, unit.add * cells, unit.sqrt * cells, unit.div * cells)


def bench(channels=64, height=256, width=128, l=16):
    """both closed forms and their multiplication ratio"""
    glob = count_similarity_ops(channels, height, width, l, "global")
    block = count_similarity_ops(channels, height, width, l, "blockwise")
    return {
        "dims": {"C": channels, "H": height, "W": width, "l": l},
        "global": glob.to_json(),
        "blockwise": block.to_json(),
        "ratio": block.mul / float(glob.mul),
    }
