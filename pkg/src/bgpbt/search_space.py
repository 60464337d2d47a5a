"""Mixed search spaces and the normalized representation used by the optimizer.

Continuous and ordinal dimensions live in the ``x`` block, normalized to
[0, 1]. Categorical dimensions live in the ``h`` block as integer indices.
Ordinals are normalized by rank so that adjacent values are always one
uniform step apart.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

KINDS = ("continuous", "ordinal", "categorical")


class SpaceError(ValueError):
    """Raised for invalid space definitions or values outside a space."""


@dataclass(frozen=True)
class DimensionSpec:
    """A single named dimension.

    Attributes:
        kind: one of ``continuous``, ``ordinal`` or ``categorical``.
        name: unique identifier.
        lower, upper: bounds for continuous dims.
        scale: ``linear`` or ``log`` (continuous only).
        values: strictly increasing value list (ordinal only).
        labels: category labels (categorical only).
        arch: True if the dimension belongs to the architecture block.
        default: optional raw default value.
    """

    kind: str
    name: str
    lower: float | None = None
    upper: float | None = None
    scale: str = "linear"
    values: tuple = ()
    labels: tuple = ()
    arch: bool = False
    default: Any = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise SpaceError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind == "continuous":
            if self.lower is None or self.upper is None:
                raise SpaceError(f"{self.name}: continuous dims need min and max")
            if not self.lower < self.upper:
                raise SpaceError(f"{self.name}: lower must be < upper")
            if self.scale not in ("linear", "log"):
                raise SpaceError(f"{self.name}: unknown scale {self.scale!r}")
            if self.scale == "log" and self.lower <= 0:
                raise SpaceError(f"{self.name}: log scale needs positive bounds")
        elif self.kind == "ordinal":
            vals = tuple(self.values)
            if len(vals) < 2:
                raise SpaceError(f"{self.name}: ordinal needs at least 2 values")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise SpaceError(f"{self.name}: ordinal values must be strictly increasing")
            object.__setattr__(self, "values", vals)
        else:
            labels = tuple(self.labels)
            if len(labels) < 2:
                raise SpaceError(f"{self.name}: categorical needs cardinality >= 2")
            if len(set(map(repr, labels))) != len(labels):
                raise SpaceError(f"{self.name}: duplicate labels")
            object.__setattr__(self, "labels", labels)

    @classmethod
    def continuous(cls, name, lower, upper, scale="linear", **kw) -> DimensionSpec:
        return cls("continuous", name, lower=float(lower), upper=float(upper), scale=scale, **kw)

    @classmethod
    def integer(cls, name, lower: int, upper: int, **kw) -> DimensionSpec:
        return cls("ordinal", name, values=tuple(range(int(lower), int(upper) + 1)), **kw)

    @classmethod
    def powers_of_two(cls, name, lower: int, upper: int, **kw) -> DimensionSpec:
        lo, hi = int(math.log2(lower)), int(math.log2(upper))
        return cls("ordinal", name, values=tuple(2**k for k in range(lo, hi + 1)), **kw)

    @classmethod
    def categorical(cls, name, labels: Sequence, **kw) -> DimensionSpec:
        return cls("categorical", name, labels=tuple(labels), **kw)

    @property
    def cardinality(self) -> int:
        if self.kind == "ordinal":
            return len(self.values)
        if self.kind == "categorical":
            return len(self.labels)
        raise SpaceError(f"{self.name}: continuous dims have no cardinality")

    # -- single-value transforms -------------------------------------------------

    def to_unit(self, value) -> float | int:
        if self.kind == "continuous":
            v = float(value)
            if not (self.lower <= v <= self.upper):
                raise SpaceError(f"{self.name}: {value} outside [{self.lower}, {self.upper}]")
            if self.scale == "log":
                u = (math.log(v) - math.log(self.lower)) / (math.log(self.upper) - math.log(self.lower))
            else:
                u = (v - self.lower) / (self.upper - self.lower)
            return min(1.0, max(0.0, u))
        if self.kind == "ordinal":
            try:
                rank = self.values.index(value)
            except ValueError:
                raise SpaceError(f"{self.name}: {value!r} not in {self.values}") from None
            return rank / (len(self.values) - 1)
        for i, label in enumerate(self.labels):
            if label == value and type(label) is type(value):
                return i
        for i, label in enumerate(self.labels):
            if label == value:
                return i
        raise SpaceError(f"{self.name}: {value!r} not in {self.labels}")

    def from_unit(self, u):
        if self.kind == "continuous":
            u = min(1.0, max(0.0, float(u)))
            if self.scale == "log":
                lo, hi = math.log(self.lower), math.log(self.upper)
                return min(self.upper, max(self.lower, math.exp(lo + u * (hi - lo))))
            return min(self.upper, max(self.lower, self.lower + u * (self.upper - self.lower)))
        if self.kind == "ordinal":
            return self.values[self.rank_of(u)]
        return self.labels[int(u)]

    def rank_of(self, u: float) -> int:
        """Nearest ordinal rank to a normalized position."""
        n = len(self.values) - 1
        return int(min(n, max(0, round(float(u) * n))))

    @property
    def default_raw(self):
        if self.default is not None:
            return self.default
        if self.kind == "continuous":
            return self.from_unit(0.5)
        if self.kind == "ordinal":
            return self.values[(len(self.values) - 1) // 2]
        return self.labels[0]

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "name": self.name}
        if self.kind == "continuous":
            d.update(min=self.lower, max=self.upper, scale=self.scale)
        elif self.kind == "ordinal":
            d["values"] = list(self.values)
        else:
            d["labels"] = list(self.labels)
        if self.arch:
            d["arch"] = True
        if self.default is not None:
            d["default"] = self.default
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> DimensionSpec:
        unknown = set(d) - {"kind", "name", "min", "max", "scale", "values", "labels", "arch", "default"}
        if unknown:
            raise SpaceError(f"dimension {d.get('name')!r}: unknown fields {sorted(unknown)}")
        for key in ("kind", "name"):
            if key not in d:
                raise SpaceError(f"dimension definition missing field '{key}'")
        kind, name = d["kind"], d["name"]
        extra = {"arch": bool(d.get("arch", False)), "default": d.get("default")}
        if kind == "continuous":
            if "min" not in d or "max" not in d:
                raise SpaceError(f"{name}: continuous dims need 'min' and 'max'")
            return cls.continuous(name, d["min"], d["max"], scale=d.get("scale", "linear"), **extra)
        if kind == "ordinal":
            if "values" in d:
                return cls("ordinal", name, values=tuple(d["values"]), **extra)
            if "min" not in d or "max" not in d:
                raise SpaceError(f"{name}: ordinal dims need 'values' or integer 'min'/'max'")
            if d.get("scale") == "log2":
                return cls.powers_of_two(name, d["min"], d["max"], **extra)
            return cls.integer(name, d["min"], d["max"], **extra)
        if kind == "categorical":
            if "labels" not in d:
                raise SpaceError(f"{name}: categorical dims need 'labels'")
            return cls.categorical(name, d["labels"], **extra)
        raise SpaceError(f"{name}: unknown kind {kind!r}")


class SearchSpace:
    """An ordered collection of dimensions split into ``x`` and ``h`` blocks."""

    def __init__(self, dims: Iterable[DimensionSpec]):
        self.dims: tuple[DimensionSpec, ...] = tuple(dims)
        if not self.dims:
            raise SpaceError("a search space needs at least one dimension")
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise SpaceError("duplicate dimension names")
        self.x_dims = tuple(d for d in self.dims if d.kind != "categorical")
        self.h_dims = tuple(d for d in self.dims if d.kind == "categorical")
        self.d_x = len(self.x_dims)
        self.d_h = len(self.h_dims)
        self.cardinalities = np.array([d.cardinality for d in self.h_dims], dtype=int)
        self.continuous_mask = np.array([d.kind == "continuous" for d in self.x_dims], dtype=bool)
        self.ordinal_mask = ~self.continuous_mask
        self.arch_x_mask = np.array([d.arch for d in self.x_dims], dtype=bool)
        self.arch_h_mask = np.array([d.arch for d in self.h_dims], dtype=bool)
        self.ordinal_counts = np.array(
            [len(d.values) if d.kind == "ordinal" else 0 for d in self.x_dims], dtype=int
        )

    def __len__(self) -> int:
        return len(self.dims)

    def __eq__(self, other) -> bool:
        return isinstance(other, SearchSpace) and self.dims == other.dims

    def __hash__(self) -> int:
        return hash(self.dims)

    def __repr__(self) -> str:
        return f"SearchSpace({[d.name for d in self.dims]})"

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    @property
    def has_arch(self) -> bool:
        return any(d.arch for d in self.dims)

    def dim(self, name: str) -> DimensionSpec:
        for d in self.dims:
            if d.name == name:
                return d
        raise KeyError(name)

    def subspace(self, names: Iterable[str]) -> SearchSpace:
        wanted = set(names)
        return SearchSpace(d for d in self.dims if d.name in wanted)

    def arch_subspace(self) -> SearchSpace:
        return self.subspace(d.name for d in self.dims if d.arch)

    # -- serialization ----------------------------------------------------------

    def to_list(self) -> list[dict]:
        return [d.to_dict() for d in self.dims]

    @classmethod
    def from_list(cls, items: Sequence[Mapping]) -> SearchSpace:
        if not isinstance(items, (list, tuple)):
            raise SpaceError("space must be a list of dimension definitions")
        return cls(DimensionSpec.from_dict(item) for item in items)

    @classmethod
    def from_file(cls, path: str | Path) -> SearchSpace:
        text = Path(path).read_text()
        if str(path).endswith(".json"):
            data = json.loads(text)
        else:
            import yaml

            data = yaml.safe_load(text)
        if isinstance(data, Mapping) and "space" in data:
            data = data["space"]
        return cls.from_list(data)

    # -- config construction ------------------------------------------------------

    def make(self, x, h) -> ConfigVector:
        return ConfigVector(np.asarray(x, dtype=float), np.asarray(h, dtype=int), self)

    def encode(self, raw: Mapping[str, Any]) -> ConfigVector:
        return encode(raw, self)

    def decode(self, config: ConfigVector) -> dict[str, Any]:
        return decode(config, self)

    def default_config(self) -> ConfigVector:
        return encode({d.name: d.default_raw for d in self.dims}, self)

    def from_arrays(self, X: np.ndarray, H: np.ndarray) -> list[ConfigVector]:
        return [self.make(x, h) for x, h in zip(X, H)]

    def to_arrays(self, configs: Sequence[ConfigVector]) -> tuple[np.ndarray, np.ndarray]:
        if not configs:
            return np.zeros((0, self.d_x)), np.zeros((0, self.d_h), dtype=int)
        return np.stack([c.x for c in configs]), np.stack([c.h for c in configs]).astype(int)

    def project(self, config: ConfigVector, sub: SearchSpace) -> ConfigVector:
        """Restrict ``config`` to the dimensions of ``sub`` (by name)."""
        raw = config.decode()
        return encode({name: raw[name] for name in sub.names}, sub)

    def merge(self, config: ConfigVector, part: ConfigVector) -> ConfigVector:
        """Overwrite the dimensions covered by ``part`` in ``config`` (exact, in unit coordinates)."""
        x, h = config.x.copy(), config.h.copy()
        for i, d in enumerate(self.x_dims):
            if d.name in part.space.names:
                x[i] = part.x[[e.name for e in part.space.x_dims].index(d.name)]
        for i, d in enumerate(self.h_dims):
            if d.name in part.space.names:
                h[i] = part.h[[e.name for e in part.space.h_dims].index(d.name)]
        return config.replace(x=x, h=h)

    def snap(self, x: np.ndarray) -> np.ndarray:
        """Clip to [0,1] and snap ordinal coordinates to their nearest rank."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        if self.ordinal_mask.any():
            n = self.ordinal_counts[self.ordinal_mask] - 1
            x[..., self.ordinal_mask] = np.round(x[..., self.ordinal_mask] * n) / n
        return x


class ConfigVector:
    """A point in a mixed space: normalized ``x`` block plus categorical ``h`` block."""

    __slots__ = ("x", "h", "space")

    def __init__(self, x: np.ndarray, h: np.ndarray, space: SearchSpace):
        x = np.array(x, dtype=float).reshape(-1)
        h = np.array(h, dtype=int).reshape(-1)
        if x.shape[0] != space.d_x or h.shape[0] != space.d_h:
            raise SpaceError("block sizes do not match the space")
        if np.any(x < 0.0) or np.any(x > 1.0) or np.any(~np.isfinite(x)):
            raise SpaceError(f"x block outside [0, 1]: {x}")
        if np.any(h < 0) or np.any(h >= space.cardinalities):
            raise SpaceError(f"h block index out of range: {h}")
        x.setflags(write=False)
        h.setflags(write=False)
        self.x = x
        self.h = h
        self.space = space

    def key(self) -> tuple:
        return tuple(self.x.tolist()) + tuple(self.h.tolist())

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfigVector) and self.space == other.space and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"ConfigVector(x={self.x.tolist()}, h={self.h.tolist()})"

    def decode(self) -> dict[str, Any]:
        return decode(self, self.space)

    def replace(self, x=None, h=None) -> ConfigVector:
        return ConfigVector(self.x if x is None else x, self.h if h is None else h, self.space)


@dataclass(frozen=True)
class TimestampedObservation:
    config: ConfigVector
    timestep: int
    value: float

    def __post_init__(self) -> None:
        if self.timestep < 0:
            raise ValueError("timestep must be non-negative")


def encode(raw: Mapping[str, Any], space: SearchSpace) -> ConfigVector:
    """Map raw hyperparameter values to a normalized :class:`ConfigVector`."""
    unknown = set(raw) - set(space.names)
    if unknown:
        raise SpaceError(f"unknown dimensions: {sorted(unknown)}")
    missing = [n for n in space.names if n not in raw]
    if missing:
        raise SpaceError(f"missing dimensions: {missing}")
    x = [d.to_unit(raw[d.name]) for d in space.x_dims]
    h = [d.to_unit(raw[d.name]) for d in space.h_dims]
    return ConfigVector(np.array(x, dtype=float), np.array(h, dtype=int), space)


def decode(config: ConfigVector, space: SearchSpace | None = None) -> dict[str, Any]:
    """Inverse of :func:`encode`; ordinals snap to the nearest rank."""
    space = space or config.space
    out: dict[str, Any] = {}
    xi = iter(config.x.tolist())
    hi = iter(config.h.tolist())
    for d in space.dims:
        out[d.name] = d.from_unit(next(hi) if d.kind == "categorical" else next(xi))
    return out


def random_config(space: SearchSpace, rng: np.random.Generator) -> ConfigVector:
    """Uniform draw: continuous coordinates U[0,1], ordinal ranks and categories uniform."""
    x = rng.random(space.d_x)
    if space.ordinal_mask.any():
        counts = space.ordinal_counts[space.ordinal_mask]
        ranks = rng.integers(0, counts)
        x[space.ordinal_mask] = ranks / (counts - 1)
    h = rng.integers(0, space.cardinalities) if space.d_h else np.zeros(0, dtype=int)
    return ConfigVector(x, h, space)


def ppo_space() -> SearchSpace:
    """The 15-dimensional PPO space: 9 hyperparameters plus 6 architecture dims."""
    D = DimensionSpec
    return SearchSpace(
        [
            D.continuous("learning_rate", 1e-4, 1e-3, scale="log"),
            D.continuous("discount", 0.9, 0.9999),
            D.continuous("entropy_coef", 1e-6, 1e-1, scale="log"),
            D.integer("unroll_length", 5, 15),
            D.continuous("reward_scaling", 0.05, 20.0),
            D.powers_of_two("batch_size", 32, 1024),
            D.integer("updates_per_epoch", 2, 16),
            D.continuous("gae_lambda", 0.9, 1.0),
            D.continuous("clip_epsilon", 0.1, 0.4),
            D.powers_of_two("pi_width", 32, 256, arch=True, default=32),
            D.integer("pi_depth", 1, 5, arch=True, default=4),
            D.categorical("pi_spectral_norm", (False, True), arch=True, default=False),
            D.powers_of_two("v_width", 32, 256, arch=True, default=256),
            D.integer("v_depth", 1, 5, arch=True, default=5),
            D.categorical("v_spectral_norm", (False, True), arch=True, default=False),
        ]
    )


def mixed_benchmark_space(n_continuous: int = 2, n_ordinal: int = 1, categories: Sequence[int] = (3,)) -> SearchSpace:
    """Small mixed space used by the synthetic benchmarks."""
    dims = [DimensionSpec.continuous(f"x{i}", 0.0, 1.0) for i in range(n_continuous)]
    dims += [DimensionSpec.integer(f"o{i}", 0, 10) for i in range(n_ordinal)]
    dims += [
        DimensionSpec.categorical(f"c{i}", tuple(f"k{j}" for j in range(n))) for i, n in enumerate(categories)
    ]
    return SearchSpace(dims)


NAMED_SPACES = {"ppo": ppo_space, "mixed": mixed_benchmark_space}


def space_from_spec(spec) -> SearchSpace:
    """Build a space from a name, a file path, or an inline list of dimension dicts."""
    if isinstance(spec, SearchSpace):
        return spec
    if isinstance(spec, str):
        if spec in NAMED_SPACES:
            return NAMED_SPACES[spec]()
        return SearchSpace.from_file(spec)
    if isinstance(spec, Mapping):
        if "name" in spec and spec["name"] in NAMED_SPACES and "kind" not in spec:
            params = {k: v for k, v in spec.items() if k != "name"}
            return NAMED_SPACES[spec["name"]](**params)
        raise SpaceError("space mapping must name a built-in space")
    return SearchSpace.from_list(spec)


__all__ = [
    "ConfigVector",
    "DimensionSpec",
    "SearchSpace",
    "SpaceError",
    "TimestampedObservation",
    "decode",
    "encode",
    "mixed_benchmark_space",
    "ppo_space",
    "random_config",
    "space_from_spec",
]
