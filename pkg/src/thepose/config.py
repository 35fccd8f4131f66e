"""Flat key-value experiment configs with dotted section names.

One `section.key = value` per line, `#` comments, no nesting. Unknown keys
are rejected and every value is validated on load, so a config that loads
is a config that runs. Serialization emits the canonical key order, making
load -> serialize -> load idempotent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import Error
from .head import TrainConfig
from .network import HgfConfig
from .render import default_intrinsics
from .shapes import CATEGORIES

_INT = "int"
_FLOAT = "float"
_STRLIST = "strlist"
_INTLIST = "intlist"


@dataclass
class ExperimentConfig:
    categories: list = field(default_factory=lambda: ["mug"])
    train_scenes: int = 512
    test_scenes: int = 128
    n_points: int = 1024
    image: int = 128
    k: int = 15
    alpha1: float = 0.8
    alpha2: float = 0.2
    refine_channels: int = 16
    tgc_width: int = 32
    widths: list = field(default_factory=lambda: [32, 32, 64, 64, 128])
    global_width: int = 128
    head_hidden: int = 64
    pe_bands: int = 2
    steps: int = 2000
    lr: float = 1e-3
    batch: int = 1
    tail_frac: float = 0.28
    w_rot: float = 1.0
    w_trans: float = 1.0
    w_size: float = 1.0
    n_mc: int = 10_000
    occlusion: float = 0.0
    seed_data: int = 1
    seed_train: int = 2
    seed_eval: int = 3

    def hgf(self) -> HgfConfig:
        return HgfConfig(
            k=self.k, alpha1=self.alpha1, alpha2=self.alpha2,
            refine_channels=self.refine_channels, tgc_width=self.tgc_width,
            gc_widths=tuple(self.widths), global_width=self.global_width,
            head_hidden=self.head_hidden, pe_bands=self.pe_bands,
        )

    def train_cfg(self) -> TrainConfig:
        return TrainConfig(steps=self.steps, lr=self.lr, batch=self.batch,
                           tail_frac=self.tail_frac, w_rot=self.w_rot,
                           w_trans=self.w_trans, w_size=self.w_size)

    def intrinsics(self):
        return default_intrinsics(self.image, self.image)

    def validate(self):
        for cat in self.categories:
            if cat not in CATEGORIES:
                raise Error("config", f"unknown category {cat!r}")
        if not self.categories:
            raise Error("config", "at least one category required")
        if self.train_scenes < 1 or self.test_scenes < 0:
            raise Error("config", "scene counts out of range")
        if self.n_points < 1:
            raise Error("config", "n_points must be >= 1")
        if self.image < 16:
            raise Error("config", "image size too small")
        if self.steps < 1 or self.batch < 1:
            raise Error("config", "steps and batch must be >= 1")
        if self.lr <= 0:
            raise Error("config", "lr must be positive")
        if not 0.0 <= self.tail_frac <= 1.0:
            raise Error("config", "tail_frac must be in [0, 1]")
        if not 0.0 <= self.occlusion < 1.0:
            raise Error("config", "occlusion must be in [0, 1)")
        if self.n_mc < 10_000:
            raise Error("config", "n_mc must be at least 1e4")
        if self.k >= self.n_points:
            raise Error("config", "k must be below n_points")
        try:
            self.hgf()
        except Error as err:
            raise Error("config", str(err)) from err
        return self


_KEYS = {
    "data.categories": ("categories", _STRLIST),
    "data.train_scenes": ("train_scenes", _INT),
    "data.test_scenes": ("test_scenes", _INT),
    "data.n_points": ("n_points", _INT),
    "data.image": ("image", _INT),
    "net.k": ("k", _INT),
    "net.alpha1": ("alpha1", _FLOAT),
    "net.alpha2": ("alpha2", _FLOAT),
    "net.refine_channels": ("refine_channels", _INT),
    "net.tgc_width": ("tgc_width", _INT),
    "net.widths": ("widths", _INTLIST),
    "net.global_width": ("global_width", _INT),
    "net.head_hidden": ("head_hidden", _INT),
    "net.pe_bands": ("pe_bands", _INT),
    "train.steps": ("steps", _INT),
    "train.lr": ("lr", _FLOAT),
    "train.batch": ("batch", _INT),
    "train.tail_frac": ("tail_frac", _FLOAT),
    "train.w_rot": ("w_rot", _FLOAT),
    "train.w_trans": ("w_trans", _FLOAT),
    "train.w_size": ("w_size", _FLOAT),
    "eval.n_mc": ("n_mc", _INT),
    "eval.occlusion": ("occlusion", _FLOAT),
    "seed.data": ("seed_data", _INT),
    "seed.train": ("seed_train", _INT),
    "seed.eval": ("seed_eval", _INT),
}


def _parse_value(kind, raw, key):
    try:
        if kind == _INT:
            return int(raw)
        if kind == _FLOAT:
            return float(raw)
        if kind == _STRLIST:
            return [x.strip() for x in raw.split(",") if x.strip()]
        if kind == _INTLIST:
            return [int(x) for x in raw.split(",") if x.strip()]
    except ValueError as err:
        raise Error("config", f"bad value for {key}: {raw!r}") from err
    raise Error("config", f"unhandled kind {kind}")


def parse_config(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise Error("config", f"line {lineno}: expected key = value")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _KEYS:
            raise Error("config", f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise Error("config", f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        attr, kind = _KEYS[key]
        setattr(cfg, attr, _parse_value(kind, raw, key))
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as err:
        raise Error("io", f"cannot read config {path}: {err}") from err
    return parse_config(text)


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key, (attr, kind) in _KEYS.items():
        value = getattr(cfg, attr)
        if kind in (_STRLIST, _INTLIST):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
