"""Experiment configuration: a versioned JSON schema with strict key checking."""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

SCHEMA_VERSION = 1
ALGORITHMS = ("full-info", "bandit", "na")
STOPPING = ("ski-randomized", "ski-deterministic", "scenario-aware")

TOP_KEYS = {"schema_version", "name", "algorithm", "family", "instance", "T", "sweep", "seeds", "replicas",
            "overrides", "benchmark"}
INSTANCE_KEYS = {"generator", "file"}
GENERATOR_KEYS = {"kind", "n", "params", "seed"}
SWEEP_KEYS = {"T"}
OVERRIDE_KEYS = {"eta", "interval_length", "L", "formula", "p", "beta", "alpha", "constants", "stopping",
                 "rounding", "inner_max_iter", "inner_tol"}
BENCHMARK_MODES = ("auto", "none")


class ConfigError(ValueError):
    """Invalid configuration; ``line`` points into the source text when known."""

    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line, self.source, self.message = line, source, message
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


@dataclass
class Config:
    doc: dict
    source: str = "<config>"

    @property
    def algorithm(self) -> str:
        return self.doc["algorithm"]

    @property
    def seeds(self) -> list[int]:
        return list(self.doc["seeds"])

    @property
    def horizons(self) -> list[int]:
        sweep = self.doc.get("sweep")
        if sweep:
            return [int(t) for t in sweep["T"]]
        return [int(self.doc["T"])]

    @property
    def overrides(self) -> dict:
        return self.doc.get("overrides", {})

    def hash(self) -> str:
        blob = json.dumps(self.doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _set_dotted(doc: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    cur = doc
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"override {dotted!r} descends into a non-object")
    cur[parts[-1]] = value


def parse_override(item: str) -> tuple[str, object]:
    """``key=value``; the value is read as JSON when possible, else kept as a string."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path: str | Path | None = None, text: str | None = None, overrides: list[str] = (),
                seeds: list[int] | None = None, replicas: int | None = None) -> Config:
    """Read, apply command-line overrides, then validate."""
    source = str(path) if path is not None else "<config>"
    if text is None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e.strerror}", source=source) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", e.lineno, source) from None
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object", 1, source)
    for item in overrides:
        key, value = parse_override(item)
        _set_dotted(doc, key, value)
    if seeds is not None:
        doc["seeds"] = list(seeds)
    if replicas is not None:
        doc["replicas"] = int(replicas)
    return Config(validate(doc, text, source), source)


def validate(doc: dict, text: str = "", source: str = "<config>") -> dict:
    """Check the schema and fill defaults; returns a normalized copy."""
    doc = copy.deepcopy(doc)

    def fail(msg, key=None):
        raise ConfigError(msg, _line_of(text, key) if key else None, source)

    def reject_unknown(obj, allowed, where):
        for key in obj:
            if key not in allowed:
                fail(f"unknown key {key!r} in {where}", key)

    reject_unknown(doc, TOP_KEYS, "config")
    if doc.get("schema_version") != SCHEMA_VERSION:
        fail(f"schema_version must be {SCHEMA_VERSION}", "schema_version")
    if doc.get("algorithm") not in ALGORITHMS:
        fail(f"algorithm must be one of {', '.join(ALGORITHMS)}", "algorithm")

    fam = doc.setdefault("family", {"kind": "select1"})
    if not isinstance(fam, dict) or fam.get("kind") not in ("select1", "selectk", "matroid"):
        fail("family.kind must be select1, selectk or matroid", "family")
    if fam["kind"] == "selectk" and (not isinstance(fam.get("k"), int) or fam["k"] < 1):
        fail("selectk needs a positive integer k", "family")
    if fam["kind"] == "matroid" and not isinstance(fam.get("matroid"), dict):
        fail("matroid family needs a matroid object", "family")

    inst = doc.get("instance")
    if not isinstance(inst, dict) or len(inst) != 1:
        fail("instance must hold exactly one of generator or file", "instance")
    reject_unknown(inst, INSTANCE_KEYS, "instance")
    if "generator" in inst:
        gen = inst["generator"]
        if not isinstance(gen, dict):
            fail("instance.generator must be an object", "generator")
        reject_unknown(gen, GENERATOR_KEYS, "instance.generator")
        if not isinstance(gen.get("kind"), str):
            fail("instance.generator.kind is required", "generator")
        if not isinstance(gen.get("n"), int) or gen["n"] < 1:
            fail("instance.generator.n must be a positive integer", "n")
        gen.setdefault("params", {})
        gen.setdefault("seed", 0)
    elif not isinstance(inst["file"], str):
        fail("instance.file must be a path", "file")

    sweep = doc.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict):
            fail("sweep must be an object", "sweep")
        reject_unknown(sweep, SWEEP_KEYS, "sweep")
        ts = sweep.get("T")
        if not isinstance(ts, list) or not ts or not all(isinstance(t, int) and t >= 1 for t in ts):
            fail("sweep.T must be a non-empty list of positive integers", "sweep")
    elif "generator" in inst:
        if not isinstance(doc.get("T"), int) or doc["T"] < 1:
            fail("T must be a positive integer", "T")

    seeds = doc.setdefault("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        fail("seeds must be a non-empty list of non-negative integers", "seeds")
    if len(set(seeds)) != len(seeds):
        fail("seeds must be distinct", "seeds")
    replicas = doc.setdefault("replicas", len(seeds))
    if not isinstance(replicas, int) or replicas < 1:
        fail("replicas must be a positive integer", "replicas")
    if replicas > len(seeds):
        start = max(seeds) + 1
        doc["seeds"] = seeds + list(range(start, start + replicas - len(seeds)))
    else:
        doc["seeds"] = seeds[:replicas]

    ov = doc.setdefault("overrides", {})
    if not isinstance(ov, dict):
        fail("overrides must be an object", "overrides")
    reject_unknown(ov, OVERRIDE_KEYS, "overrides")
    for key in ("eta", "p", "beta", "alpha", "L", "inner_tol"):
        if key in ov and not (isinstance(ov[key], (int, float)) and ov[key] > 0):
            fail(f"overrides.{key} must be a positive number", key)
    if "p" in ov and ov["p"] > 1:
        fail("overrides.p must lie in (0, 1]", "p")
    for key in ("interval_length", "inner_max_iter"):
        if key in ov and not (isinstance(ov[key], int) and ov[key] >= 1):
            fail(f"overrides.{key} must be a positive integer", key)
    if "formula" in ov and ov["formula"] not in ("proof", "statement"):
        fail("overrides.formula must be proof or statement", "formula")
    if "constants" in ov and ov["constants"] not in ("default", "published"):
        fail("overrides.constants must be default or published", "constants")
    if "stopping" in ov and ov["stopping"] not in STOPPING:
        fail(f"overrides.stopping must be one of {', '.join(STOPPING)}", "stopping")
    if "rounding" in ov and not isinstance(ov["rounding"], bool):
        fail("overrides.rounding must be true or false", "rounding")

    bench = doc.setdefault("benchmark", "auto")
    if isinstance(bench, dict):
        reject_unknown(bench, {"fixture"}, "benchmark")
        if not isinstance(bench.get("fixture"), str):
            fail("benchmark.fixture must be a path", "benchmark")
    elif bench not in BENCHMARK_MODES:
        fail("benchmark must be auto, none or {\"fixture\": path}", "benchmark")
    if "name" in doc and not isinstance(doc["name"], str):
        fail("name must be a string", "name")
    return doc
