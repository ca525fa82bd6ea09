from __future__ import annotations

import re
from typing import NamedTuple


class CameraId(NamedTuple):
    row: int
    col: int

    @property
    def name(self) -> str:
        return f"cam_{self.row}_{self.col}"

    @classmethod
    def parse(cls, name: str) -> "CameraId":
        m = re.fullmatch(r"cam_(\d+)_(\d+)", name)
        if not m:
            raise ValueError(f"not a camera name: {name!r}")
        return cls(int(m.group(1)), int(m.group(2)))


class CaptureId(NamedTuple):
    height: int
    shot: int

    @property
    def name(self) -> str:
        return f"h{self.height}_s{self.shot}"

    @classmethod
    def parse(cls, name: str) -> "CaptureId":
        m = re.fullmatch(r"h(\d+)_s(\d+)", name)
        if not m:
            raise ValueError(f"not a capture name: {name!r}")
        return cls(int(m.group(1)), int(m.group(2)))
