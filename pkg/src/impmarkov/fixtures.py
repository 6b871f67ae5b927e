"""Named fixtures: bundled JSON files plus an optional user directory.

Each fixture is a JSON object with a ``kind`` (generator, diffusion,
functional, relation or family) and kind-specific fields; the layout is
pinned by ``schema/config.schema.json``. Setting ``IMPMARKOV_FIXTURES`` to a
directory adds its ``*.json`` files, overriding bundled ones of the same name.
"""

from __future__ import annotations

import json
import os
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .diffusion import DiffusionSpec
from .errors import ConfigError
from .poset import ImpreciseFamily
from .semigroup import Functional, ProbabilityMeasure, StateSpace, validate_generator

ENV_VAR = "IMPMARKOV_FIXTURES"


@lru_cache(maxsize=1)
def config_schema() -> dict:
    return json.loads(resources.files("impmarkov").joinpath("schema/config.schema.json").read_text())


def _fixture_validator():
    schema = config_schema()
    return jsonschema.Draft202012Validator({**schema["$defs"]["fixture"], "$defs": schema["$defs"]})


def pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def validate_fixture(obj, where: str = "") -> None:
    errors = sorted(_fixture_validator().iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, where + pointer(e.absolute_path).rstrip("/"))


def bundled_dir() -> Path:
    return Path(str(resources.files("impmarkov").joinpath("bundled")))


def fixture_dirs() -> list[tuple[str, Path]]:
    dirs = [("bundled", bundled_dir())]
    custom = os.environ.get(ENV_VAR)
    if custom:
        dirs.append(("custom", Path(custom)))
    return dirs


def scan() -> list[dict]:
    """Inventory rows ``{name, kind, provenance, source, path, error}``; later
    directories override earlier ones name by name."""
    rows: dict[str, dict] = {}
    for source, d in fixture_dirs():
        if not d.is_dir():
            continue
        for path in sorted(d.glob("*.json")):
            row = {"name": path.stem, "kind": None, "provenance": "", "source": source,
                   "path": str(path), "error": None}
            try:
                obj = json.loads(path.read_text(encoding="utf-8"))
                validate_fixture(obj)
                row.update(name=obj.get("name", path.stem), kind=obj["kind"],
                           provenance=obj.get("provenance", ""))
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                row["error"] = f"parse error: {exc}"
            except ConfigError as exc:
                row["error"] = f"schema error: {exc}"
            rows[row["name"]] = row
    return sorted(rows.values(), key=lambda r: r["name"])


def load_all() -> dict:
    """Raw fixture objects by name, skipping files that fail to load."""
    out = {}
    for row in scan():
        if row["error"] is None:
            out[row["name"]] = json.loads(Path(row["path"]).read_text(encoding="utf-8"))
    return out


class FixtureSet:
    """Resolves fixture names to library objects; ``where`` prefixes error pointers."""

    def __init__(self, raw: dict):
        self.raw = dict(raw)

    def get(self, name: str, kind: str, where: str = ""):
        if name not in self.raw:
            raise ConfigError(f"unknown fixture {name!r}", where)
        obj = self.raw[name]
        if obj["kind"] != kind:
            raise ConfigError(f"fixture {name!r} is a {obj['kind']}, expected {kind}", where)
        return obj

    def generator(self, name: str, where: str = ""):
        obj = self.get(name, "generator", where)
        try:
            L = validate_generator(np.asarray(obj["rates"], dtype=float), obj.get("states"))
            mu = ProbabilityMeasure(L.states, obj["measure"]) if "measure" in obj else None
        except ValueError as exc:
            raise ConfigError(f"fixture {name!r}: {exc}", where) from None
        return L, mu

    def diffusion(self, name: str, where: str = "") -> DiffusionSpec:
        obj = self.get(name, "diffusion", where)
        try:
            return DiffusionSpec.from_dict({"name": name, **obj})
        except ValueError as exc:
            raise ConfigError(f"fixture {name!r}: {exc}", where) from None

    def functional(self, ref, states: StateSpace, where: str = "") -> Functional:
        values = ref if isinstance(ref, list) else self.get(ref, "functional", where)["values"]
        try:
            return Functional(states, values)
        except ValueError as exc:
            raise ConfigError(f"functional {ref!r}: {exc}", where) from None

    def relation(self, name: str, where: str = ""):
        obj = self.get(name, "relation", where)
        return obj["names"], obj["relation"]

    def family(self, name: str, where: str = "") -> ImpreciseFamily:
        obj = self.get(name, "family", where)
        members = {}
        for ref in obj["members"]:
            key, k = ref, 1
            while key in members:
                k += 1
                key = f"{ref}#{k}"
            members[key] = self.generator(ref, where)
        states = next(iter(members.values()))[0].states
        kwargs = {}
        if "time_grid" in obj:
            kwargs["time_grid"] = time_grid(obj["time_grid"])
        if "eps_order" in obj:
            kwargs["eps_order"] = float(obj["eps_order"])
        try:
            return ImpreciseFamily(members, self.functional(obj["f_tilde"], states, where), **kwargs)
        except ValueError as exc:
            raise ConfigError(f"family {name!r}: {exc}", where) from None


def time_grid(spec) -> np.ndarray:
    if isinstance(spec, dict):
        return np.geomspace(spec["start"], spec["stop"], spec["points"])
    return np.asarray(spec, dtype=float)
