"""Command-line pipeline: calibrate, build, render, generate, evaluate.

Each verb reads a JSON config (``--config``), resolves its inputs relative
to the config file, and writes artifacts into the output directory:

============  ==========================================================
calibrate     ``registry.json``
build         ``train.jsonl``, ``test.jsonl``, ``manifest.json``
render        ``prompts_<mode>.jsonl``
generate      ``candidates_<mode>.jsonl`` (journal ``*.journal``)
evaluate      ``results_<mode>.jsonl``, ``report_<mode>.json``
============  ==========================================================

Exit codes: 0 success, 2 configuration error, 3 ingestion error,
4 generator backend error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import __version__
from .evaluation import (
    LookupScoreSource,
    RemoteScoreSource,
    SyntheticScoreSource,
    aggregate,
    score_case,
)
from .gateway import (
    DEFAULT_CANDIDATES,
    CandidateSet,
    FewShotExample,
    GatewayError,
    GenerationParams,
    GenerationRequest,
    Journal,
    backend_from_config,
    generate_many,
)
from .instructions import (
    Mode,
    PromptProvenance,
    RenderedPrompt,
    TemplateError,
    ThresholdSource,
    load_templates,
    render,
)
from .molgraph import (
    CanonicalSmiles,
    FragmentScoreTable,
    FragmentTableError,
    MolGraphError,
    lipinski_pass,
    parse_smiles,
)
from .properties import (
    MissingProperty,
    OptimizationObjective,
    PropertyRegistry,
    PropertyVector,
    RegistryError,
    UnknownProperty,
    all_objectives,
)
from .records import (
    IngestionError,
    canonical_field,
    canonical_json,
    provenance,
    read_jsonl,
    require,
    score_map,
    sha256_text,
    smiles_field,
    write_json,
    write_jsonl,
    write_text,
)
from .tasks import (
    DEFAULT_CAP,
    DEFAULT_TEST_SIZE,
    SIMILARITY_GATE,
    MoleculePair,
    PairError,
    TaskInstance,
    TestCase,
    build_split,
    calibrate_thresholds,
)

log = logging.getLogger("cmumo")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INGEST = 3
EXIT_BACKEND = 4

SEED_NAMES = ("build", "render", "generate")
_PATH_KEYS = ("pairs", "scores", "fragment_table", "templates", "answers", "out")
_TOP_KEYS = {
    "paths", "registry", "properties", "combination", "objectives", "seeds", "percentile",
    "n_test", "cap", "similarity_gate", "lipinski", "n_candidates", "threshold_source",
    "mode", "generator", "scorer",
}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


# --- configuration ----------------------------------------------------------

@dataclass
class PipelineConfig:
    """Resolved pipeline settings.

    Paths are absolute after loading; :attr:`digest` hashes the settings with
    paths relative to the config directory, so identical run layouts hash
    identically wherever they live.
    """

    paths: dict[str, Path | None]
    registry_path: Path | None = None
    properties: tuple[str, ...] | None = None
    combination: str | list | None = None
    objectives: list[dict] | None = None
    seeds: dict[str, int] = field(default_factory=lambda: {k: 1 for k in SEED_NAMES})
    percentile: float = 60.0
    n_test: int = DEFAULT_TEST_SIZE
    cap: int = DEFAULT_CAP
    similarity_gate: float = SIMILARITY_GATE
    lipinski: bool = False
    n_candidates: int = DEFAULT_CANDIDATES
    threshold_source: str = ThresholdSource.THETA_DEFAULT.value
    mode: str = Mode.EVAL_SEEN.value
    generator: dict = field(default_factory=lambda: {"backend": "mock"})
    scorer: dict = field(default_factory=lambda: {"kind": "lookup"})
    digest: str = ""

    @classmethod
    def load(cls, path: str | os.PathLike | None, overrides: Mapping[str, Any] | None = None) -> "PipelineConfig":
        """Read ``path`` (or start empty), apply CLI ``overrides`` and validate."""
        if path is None:
            raw: dict = {}
            base = Path.cwd()
        else:
            p = Path(path)
            if not p.is_file():
                raise ConfigError(f"config file not found: {p}")
            try:
                raw = json.loads(p.read_text(encoding="utf-8"))
            except ValueError as exc:
                raise ConfigError(f"{p}: invalid JSON ({exc})") from None
            if not isinstance(raw, dict):
                raise ConfigError(f"{p}: top level must be an object")
            base = p.resolve().parent
        unknown = set(raw) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        raw = {k: v for k, v in raw.items()}
        raw["paths"] = dict(raw.get("paths") or {})
        raw["seeds"] = dict(raw.get("seeds") or {})
        cwd = Path.cwd()
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key == "seed":
                raw["seeds"] = {k: value for k in SEED_NAMES}
            elif key in ("out",):
                raw["paths"]["out"] = str((cwd / value).resolve())
            elif key == "registry":
                raw["registry"] = str((cwd / value).resolve())
            else:
                raw[key] = value
        return cls._from_raw(raw, base)

    @classmethod
    def _from_raw(cls, raw: dict, base: Path) -> "PipelineConfig":
        bad = set(raw["paths"]) - set(_PATH_KEYS)
        if bad:
            raise ConfigError(f"unknown path keys: {sorted(bad)}")
        paths: dict[str, Path | None] = {}
        for key in _PATH_KEYS:
            v = raw["paths"].get(key)
            paths[key] = None if v is None else (base / v).resolve()
        if paths["out"] is None:
            paths["out"] = (base / "out").resolve()
        for key in ("pairs", "scores", "fragment_table", "templates", "answers"):
            if paths[key] is not None and not paths[key].is_file():
                raise ConfigError(f"{key} file not found: {paths[key]}")
        reg_path = None
        if raw.get("registry") is not None:
            reg_path = (base / raw["registry"]).resolve()
            if not reg_path.is_file():
                raise ConfigError(f"registry file not found: {reg_path}")

        seeds = {k: 1 for k in SEED_NAMES}
        for k, v in raw["seeds"].items():
            if k not in SEED_NAMES:
                raise ConfigError(f"unknown seed {k!r}; expected one of {list(SEED_NAMES)}")
            seeds[k] = v
        for k, v in seeds.items():
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"seed {k!r} must be a positive integer, got {v!r}")

        def positive_int(key: str, default: int) -> int:
            v = raw.get(key, default)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"{key} must be a positive integer, got {v!r}")
            return v

        def number(key: str, default: float, lo: float, hi: float) -> float:
            v = raw.get(key, default)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not lo <= v <= hi:
                raise ConfigError(f"{key} must be a number in [{lo}, {hi}], got {v!r}")
            return float(v)

        try:
            mode = Mode(raw.get("mode", Mode.EVAL_SEEN.value)).value
            ts = ThresholdSource(raw.get("threshold_source", ThresholdSource.THETA_DEFAULT.value)).value
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        props = raw.get("properties")
        if props is not None and (not isinstance(props, list) or not props):
            raise ConfigError("properties must be a non-empty list of names")
        gen = dict(raw.get("generator") or {"backend": "mock"})
        scorer = dict(raw.get("scorer") or {"kind": "lookup"})
        if scorer.get("kind", "lookup") not in ("lookup", "synthetic", "remote"):
            raise ConfigError(f"unknown scorer kind {scorer.get('kind')!r}")

        cfg = cls(
            paths=paths,
            registry_path=reg_path,
            properties=tuple(props) if props else None,
            combination=raw.get("combination"),
            objectives=raw.get("objectives"),
            seeds=seeds,
            percentile=number("percentile", 60.0, 0.0, 100.0),
            n_test=positive_int("n_test", DEFAULT_TEST_SIZE),
            cap=positive_int("cap", DEFAULT_CAP),
            similarity_gate=number("similarity_gate", SIMILARITY_GATE, 0.0, 1.0),
            lipinski=bool(raw.get("lipinski", False)),
            n_candidates=positive_int("n_candidates", DEFAULT_CANDIDATES),
            threshold_source=ts,
            mode=mode,
            generator=gen,
            scorer=scorer,
        )
        if not 0 < cfg.percentile < 100:
            raise ConfigError("percentile must be strictly between 0 and 100")
        cfg.digest = sha256_text(canonical_json(cfg._portable(base)))
        cfg.registry()  # fail early on a bad registry or property list
        if cfg.combination is not None:
            cfg.combination_names()
        return cfg

    def _portable(self, base: Path) -> dict:
        def rel(p: Path | None):
            return None if p is None else Path(os.path.relpath(p, base)).as_posix()

        return {
            "paths": {k: rel(v) for k, v in self.paths.items()},
            "registry": rel(self.registry_path),
            "properties": list(self.properties) if self.properties else None,
            "combination": self.combination,
            "objectives": self.objectives,
            "seeds": self.seeds,
            "percentile": self.percentile,
            "n_test": self.n_test,
            "cap": self.cap,
            "similarity_gate": self.similarity_gate,
            "lipinski": self.lipinski,
            "n_candidates": self.n_candidates,
            "threshold_source": self.threshold_source,
            "mode": self.mode,
            "generator": {k: v for k, v in self.generator.items() if k != "api_key"},
            "scorer": self.scorer,
        }

    # -- derived -------------------------------------------------------------

    def registry(self) -> PropertyRegistry:
        try:
            reg = PropertyRegistry.load(self.registry_path) if self.registry_path else PropertyRegistry.default()
            if self.properties:
                reg = reg.subset(list(self.properties))
        except (RegistryError, UnknownProperty) as exc:
            raise ConfigError(f"registry: {exc}") from None
        return reg

    def combination_names(self) -> tuple[str, ...]:
        if self.combination is None:
            raise ConfigError("no combination given (config 'combination' or --combination)")
        reg = self.registry()
        try:
            if isinstance(self.combination, str):
                return reg.resolve_combination(self.combination)
            return reg.order(self.combination)
        except (UnknownProperty, ValueError) as exc:
            raise ConfigError(f"combination {self.combination!r}: {exc}") from None

    def objective_list(self, reg: PropertyRegistry) -> list[OptimizationObjective]:
        names = self.combination_names()
        if self.objectives is None:
            return all_objectives(names, reg)
        out = []
        for d in self.objectives:
            try:
                o = OptimizationObjective.from_dict(d) if isinstance(d, Mapping) else OptimizationObjective.from_key(d)
            except (ValueError, TypeError, AttributeError) as exc:
                raise ConfigError(f"objective {d!r}: {exc}") from None
            if o.combination != frozenset(names) or not o.improve:
                raise ConfigError(f"objective {d!r} must split the combination {list(names)} "
                                  "with at least one property to improve")
            out.append(o)
        return out

    def need(self, *keys: str) -> None:
        for k in keys:
            if self.paths.get(k) is None:
                raise ConfigError(f"paths.{k} is required for this command")

    def out(self, name: str) -> Path:
        return self.paths["out"] / name

    def header(self, command: str, **extra) -> dict:
        return provenance(command, self.digest, self.seeds, **extra)


# --- ingestion --------------------------------------------------------------

def read_scores(path: Path) -> list[tuple[int, str, dict, float | None]]:
    """``(line, smiles text, scores, logp or None)`` per scores-file record."""
    out = []
    for line, rec in read_jsonl(path):
        smi = smiles_field(rec, "smiles", path, line)
        scores = score_map(require(rec, "scores", path, line), "scores", path, line)
        logp = rec.get("logp")
        if logp is not None and (isinstance(logp, bool) or not isinstance(logp, (int, float))):
            raise IngestionError(path, line, "logp must be a number")
        out.append((line, smi, scores, logp))
    if not out:
        raise IngestionError(path, None, "no records")
    return out


def read_pairs(path: Path, cache: dict) -> tuple[list[MoleculePair], int]:
    """Ingested pairs and the number of records rejected as identical molecules."""
    pairs = []
    rejected = 0
    for line, rec in read_jsonl(path):
        sx = smiles_field(rec, "smiles_x", path, line)
        sy = smiles_field(rec, "smiles_y", path, line)
        scx = score_map(require(rec, "scores_x", path, line), "scores_x", path, line)
        scy = score_map(require(rec, "scores_y", path, line), "scores_y", path, line)
        try:
            pairs.append(MoleculePair.ingest(sx, sy, scx, scy, cache=cache))
        except PairError:
            rejected += 1
        except (MolGraphError, ValueError) as exc:
            raise IngestionError(path, line, str(exc)) from None
    return pairs, rejected


def _objective_dict(o: OptimizationObjective, reg: PropertyRegistry) -> dict:
    return o.to_dict(reg)


def _load_objective(rec: Mapping, path, line: int) -> OptimizationObjective:
    d = require(rec, "objective", path, line)
    if not isinstance(d, Mapping):
        raise IngestionError(path, line, "objective must be an object")
    try:
        return OptimizationObjective.from_dict(d)
    except (ValueError, TypeError) as exc:
        raise IngestionError(path, line, f"objective: {exc}") from None


def read_train(path: Path) -> list[TaskInstance]:
    out = []
    for line, rec in read_jsonl(path):
        obj = _load_objective(rec, path, line)
        pair = MoleculePair(
            CanonicalSmiles(smiles_field(rec, "smiles_x", path, line)),
            CanonicalSmiles(smiles_field(rec, "smiles_y", path, line)),
            PropertyVector(score_map(require(rec, "scores_x", path, line), "scores_x", path, line)),
            PropertyVector(score_map(require(rec, "scores_y", path, line), "scores_y", path, line)),
            float(require(rec, "similarity", path, line)),
        )
        out.append(TaskInstance(pair, obj, tuple(require(rec, "combination", path, line))))
    return out


def read_test(path: Path) -> list[TestCase]:
    out = []
    for line, rec in read_jsonl(path):
        obj = _load_objective(rec, path, line)
        out.append(TestCase(
            CanonicalSmiles(smiles_field(rec, "smiles", path, line)),
            PropertyVector(score_map(require(rec, "scores", path, line), "scores", path, line)),
            obj,
        ))
    return out


def _existing(cfg: PipelineConfig, name: str, producer: str) -> Path:
    p = cfg.out(name)
    if not p.is_file():
        raise ConfigError(f"{p} not found; run '{producer}' first")
    return p


def _record_seed(seed: int, label: str, index: int) -> int:
    h = hashlib.sha256(f"{seed}|{label}|{index}".encode()).digest()
    return int.from_bytes(h[:8], "big")


# --- commands ---------------------------------------------------------------

def cmd_calibrate(cfg: PipelineConfig, default: bool = False) -> Path:
    """Write ``registry.json``: thresholds at the configured percentile, or the defaults."""
    reg = cfg.registry()
    extra = {"percentile": None if default else cfg.percentile}
    if not default:
        cfg.need("scores")
        rows = read_scores(cfg.paths["scores"])
        reg = calibrate_thresholds([r[2] for r in rows], cfg.percentile, reg)
        extra["molecules"] = len(rows)
    path = cfg.out("registry.json")
    write_text(path, reg.dumps(provenance=cfg.header("calibrate", **extra)))
    log.info("wrote %s", path)
    return path


def cmd_build(cfg: PipelineConfig) -> Path:
    """Write ``train.jsonl``, ``test.jsonl`` and ``manifest.json``."""
    cfg.need("pairs", "scores")
    reg = cfg.registry()
    names = cfg.combination_names()
    objectives = cfg.objective_list(reg)
    cache: dict = {}
    pairs, identical = read_pairs(cfg.paths["pairs"], cache)
    for k, pair in enumerate(pairs):
        for side, sc in (("scores_x", pair.scores_x), ("scores_y", pair.scores_y)):
            for p in names:
                if p not in sc:
                    raise IngestionError(cfg.paths["pairs"], None,
                                         f"pair {k + 1}: {side} lacks property {p!r}")

    canon_cache = {text: can for text, (can, _) in cache.items()}
    pool = []
    scores_path = cfg.paths["scores"]
    dropped_lipinski = 0
    for line, text, scores, logp in read_scores(scores_path):
        can = canonical_field({"smiles": text}, "smiles", scores_path, line, canon_cache)
        if cfg.lipinski:
            if logp is None:
                raise IngestionError(scores_path, line, "lipinski filter needs a 'logp' field")
            if not lipinski_pass(parse_smiles(can.text), float(logp)):
                dropped_lipinski += 1
                continue
        pool.append((can, scores))

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        split = build_split(pairs, reg, names, pool, objectives, n_test=cfg.n_test,
                            cap=cfg.cap, seed=cfg.seeds["build"], gate=cfg.similarity_gate)
    for w in caught:
        log.warning("%s", w.message)
    if not split.test:
        log.warning("no eligible test molecules; test file is empty")

    header = cfg.header("build", registry_sha256=reg.digest())
    train_recs = ({
        "smiles_x": t.pair.x.text, "smiles_y": t.pair.y.text,
        "scores_x": t.pair.scores_x.to_dict(), "scores_y": t.pair.scores_y.to_dict(),
        "similarity": t.pair.similarity,
        "combination": list(t.combination),
        "objective": _objective_dict(t.objective, reg),
    } for t in split.train)
    write_jsonl(cfg.out("train.jsonl"), header, train_recs)
    test_recs = ({
        "smiles": c.molecule.text, "scores": c.scores.to_dict(),
        "objective": _objective_dict(c.objective, reg),
    } for c in split.test)
    write_jsonl(cfg.out("test.jsonl"), header, test_recs)
    manifest = dict(split.manifest)
    manifest["pairs_identical_rejected"] = identical
    manifest["pool_records"] = len(pool) + dropped_lipinski
    manifest["pool_lipinski_dropped"] = dropped_lipinski
    manifest["train_tasks"] = len(split.train)
    manifest["test_cases"] = len(split.test)
    path = cfg.out("manifest.json")
    write_json(path, header, manifest)
    log.info("wrote %d train tasks and %d test cases to %s", len(split.train), len(split.test),
             cfg.paths["out"])
    return path


def _prompt_record(pid: str, index: int, rp: RenderedPrompt, reg: PropertyRegistry) -> dict:
    rec = {
        "prompt_id": pid,
        "index": index,
        "source": rp.source.text,
        "objective": rp.objective.to_dict(reg),
        "text": rp.text,
        "instruction": rp.instruction,
        "task_text": rp.task_text,
        "provenance": rp.provenance.to_dict(),
    }
    if rp.target is not None:
        rec["target"] = rp.target.text
        rec["response"] = rp.response
    return rec


def cmd_render(cfg: PipelineConfig) -> Path:
    """Write ``prompts_<mode>.jsonl`` from the train tasks or the test cases."""
    reg = cfg.registry()
    mode = Mode(cfg.mode)
    try:
        templates, lexicon = load_templates(cfg.paths["templates"])
    except TemplateError as exc:
        raise ConfigError(str(exc)) from None
    if not lexicon.covers(reg):
        missing = [p for p in reg if p not in lexicon.names]
        raise ConfigError(f"template lexicon lacks {missing}")
    if mode is Mode.TRAIN:
        items = read_train(_existing(cfg, "train.jsonl", "build"))
    else:
        if cfg.threshold_source == ThresholdSource.TARGET_DERIVED.value:
            raise ConfigError("threshold_source 'target' applies to train mode only")
        items = read_test(_existing(cfg, "test.jsonl", "build"))
    seed = cfg.seeds["render"]
    records = []
    for i, item in enumerate(items):
        try:
            rp = render(item, templates, lexicon, reg, mode, cfg.threshold_source,
                        _record_seed(seed, mode.value, i))
        except (UnknownProperty, MissingProperty, KeyError) as exc:
            raise ConfigError(f"record {i}: {exc}") from None
        records.append(_prompt_record(f"{mode.value}-{i:06d}", i, rp, reg))
    path = cfg.out(f"prompts_{mode.value}.jsonl")
    write_jsonl(path, cfg.header("render", mode=mode.value), records)
    log.info("wrote %d prompts to %s", len(records), path)
    return path


def _load_prompts(path: Path) -> list[RenderedPrompt | tuple]:
    out = []
    for line, rec in read_jsonl(path):
        prov = rec.get("provenance") or {}
        try:
            pp = PromptProvenance(
                general_id=int(prov["general_id"]), adjustment_ids=dict(prov["adjustment_ids"]),
                lexicon_mode=prov["lexicon_mode"], thresholds=dict(prov["thresholds"]),
                threshold_source=prov["threshold_source"],
                improve_order=tuple(prov["improve_order"]), mode=prov["mode"], seed=int(prov["seed"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestionError(path, line, f"bad prompt provenance: {exc}") from None
        rp = RenderedPrompt(
            text=smiles_field(rec, "text", path, line),
            instruction=smiles_field(rec, "instruction", path, line),
            task_text=smiles_field(rec, "task_text", path, line),
            source=CanonicalSmiles(smiles_field(rec, "source", path, line)),
            objective=_load_objective(rec, path, line),
            provenance=pp,
        )
        out.append((smiles_field(rec, "prompt_id", path, line), int(require(rec, "index", path, line)), rp))
    return out


def _read_answers(path: Path) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for line, rec in read_jsonl(path):
        smi = smiles_field(rec, "smiles", path, line)
        cands = require(rec, "candidates", path, line)
        if not isinstance(cands, list) or not all(isinstance(c, str) for c in cands):
            raise IngestionError(path, line, "candidates must be a list of strings")
        out[smi] = cands
    return out


def cmd_generate(cfg: PipelineConfig) -> Path:
    """Write ``candidates_<mode>.jsonl``; completed prompts are journaled for resumption."""
    mode = Mode(cfg.mode)
    prompts = _load_prompts(_existing(cfg, f"prompts_{mode.value}.jsonl", "render"))
    gen = dict(cfg.generator)
    gen.setdefault("seed", cfg.seeds["generate"])
    answers = _read_answers(cfg.paths["answers"]) if cfg.paths["answers"] else None
    try:
        backend = backend_from_config(gen, answers)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"generator: {exc}") from None
    example = None
    if gen.get("example"):
        ex = gen["example"]
        example = FewShotExample(task=ex["task"], answer=ex["answer"])
    params = GenerationParams(**{k: gen[k] for k in ("temperature", "beam_width", "max_tokens") if k in gen})
    requests = [GenerationRequest(rp, pid, cfg.n_candidates, params) for pid, _, rp in prompts]
    out_path = cfg.out(f"candidates_{mode.value}.jsonl")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    journal = Journal(out_path.with_name(out_path.name + ".journal"))
    outcomes = generate_many(requests, backend, max_in_flight=int(gen.get("max_in_flight", 4)),
                             journal=journal, framing=gen.get("framing", "inst"), example=example)
    records = []
    failures = []
    for (pid, index, _), oc in zip(prompts, outcomes):
        rec: dict = {"prompt_id": pid, "index": index}
        if oc.error is not None:
            rec["raw"] = []
            rec["error"] = f"{type(oc.error).__name__}: {oc.error}"
            failures.append(oc.error)
        else:
            rec["raw"] = list(oc.candidates.raw)
        records.append(rec)
    write_jsonl(out_path, cfg.header("generate", mode=mode.value, backend=gen.get("backend", "mock"),
                                     n_candidates=cfg.n_candidates), records)
    log.info("wrote candidates for %d prompts to %s", len(records), out_path)
    if failures:
        first = failures[0]
        raise GatewayError(f"{len(failures)} prompt(s) failed, first {first.prompt_id}: {first}",
                           first.prompt_id)
    return out_path


def _scorer(cfg: PipelineConfig, reg: PropertyRegistry):
    kind = cfg.scorer.get("kind", "lookup")
    if kind == "synthetic":
        return SyntheticScoreSource(reg, salt=str(cfg.scorer.get("salt", "0")),
                                    spread=float(cfg.scorer.get("spread", 5.0)))
    if kind == "remote":
        if "url" not in cfg.scorer:
            raise ConfigError("scorer.url is required for the remote scorer")
        return RemoteScoreSource(cfg.scorer["url"], float(cfg.scorer.get("timeout", 30.0)))
    cfg.need("scores")
    path = cfg.paths["scores"]
    table: dict[str, dict] = {}
    cache: dict = {}
    for line, text, scores, _ in read_scores(path):
        can = canonical_field({"smiles": text}, "smiles", path, line, cache)
        table.setdefault(can.text, scores)
    return LookupScoreSource(table)


def cmd_evaluate(cfg: PipelineConfig) -> Path:
    """Write ``results_<mode>.jsonl`` and ``report_<mode>.json``."""
    mode = Mode(cfg.mode)
    if mode is Mode.TRAIN:
        raise ConfigError("evaluate runs on eval_seen or eval_unseen prompts")
    reg = cfg.registry()
    cases = read_test(_existing(cfg, "test.jsonl", "build"))
    cand_path = _existing(cfg, f"candidates_{mode.value}.jsonl", "generate")
    by_index: dict[int, CandidateSet] = {}
    for line, rec in read_jsonl(cand_path):
        idx = require(rec, "index", cand_path, line)
        raw = require(rec, "raw", cand_path, line)
        if not isinstance(idx, int) or not 0 <= idx < len(cases):
            raise IngestionError(cand_path, line, f"index {idx!r} does not name a test case")
        if not isinstance(raw, list) or not all(isinstance(r, str) for r in raw):
            raise IngestionError(cand_path, line, "raw must be a list of strings")
        by_index[idx] = CandidateSet.from_completions(raw)
    if not cases:
        raise ConfigError("test set is empty; nothing to evaluate")
    scorer = _scorer(cfg, reg)
    table = FragmentScoreTable()
    if cfg.paths["fragment_table"] is not None:
        try:
            table = FragmentScoreTable.load(cfg.paths["fragment_table"])
        except FragmentTableError as exc:
            raise ConfigError(str(exc)) from None
    train_index: set[str] = set()
    train_path = cfg.out("train.jsonl")
    if train_path.is_file():
        for t in read_train(train_path):
            train_index.add(t.pair.x.text)
            train_index.add(t.pair.y.text)
    empty = CandidateSet((), (), 0, 0)
    results = [score_case(c, by_index.get(i, empty), scorer, reg) for i, c in enumerate(cases)]
    report = aggregate(results, train_index, table, reg)
    header = cfg.header("evaluate", mode=mode.value, fragment_table_approximate=table.approximate)
    write_jsonl(cfg.out(f"results_{mode.value}.jsonl"), header,
                ({"index": i, **r.to_dict()} for i, r in enumerate(results)))
    body = report.to_dict()
    body["cases_without_candidates"] = sum(1 for i in range(len(cases)) if i not in by_index)
    body["conditioning"] = "success"
    path = cfg.out(f"report_{mode.value}.json")
    write_json(path, header, body)
    log.info("SR=%.4f SR_theta=%.4f Val=%.4f over %d cases", report.sr, report.sr_theta, report.val,
             report.n_cases)
    return path


def cmd_synth(out: Path, base: Path, n_pairs: int, seed: int, salt: str,
              properties: Sequence[str] | None = None, variants: int = 20) -> Path:
    """Write synthetic ``pairs.jsonl``, ``scores.jsonl`` and a ready ``config.json``."""
    from .synthetic import DEMO_PROPERTIES, demo_registry, make_synthetic, read_smiles_column

    if not base.is_file():
        raise ConfigError(f"base molecule file not found: {base}")
    names = list(properties or DEMO_PROPERTIES)
    try:
        reg = demo_registry(names)
    except UnknownProperty as exc:
        raise ConfigError(f"unknown property {exc}") from None
    data = make_synthetic(read_smiles_column(base), reg, n_pairs, seed=seed, salt=salt,
                          variants_per_base=variants)
    header = provenance("synth", sha256_text(canonical_json(
        {"base_sha256": sha256_text(base.read_text(encoding="utf-8")), "n_pairs": n_pairs,
         "salt": salt, "properties": names, "variants": variants})), {"synth": seed})
    write_jsonl(out / "pairs.jsonl", header, data.pairs)
    write_jsonl(out / "scores.jsonl", header, data.scores)
    config = {
        "paths": {"pairs": "pairs.jsonl", "scores": "scores.jsonl", "out": "out"},
        "properties": names,
        "combination": names,
        "seeds": {k: seed for k in SEED_NAMES},
        "n_test": 200,
        "scorer": {"kind": "synthetic", "salt": salt},
        "generator": {"backend": "mock"},
    }
    write_text(out / "config.json", json.dumps(config, indent=2) + "\n")
    log.info("wrote %d pairs and %d scored molecules to %s", len(data.pairs), len(data.scores), out)
    return out / "config.json"


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmumo", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="pipeline config (JSON)")
        p.add_argument("--seed", type=int, help="override every named seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--registry", help="registry file overriding the default")
        p.add_argument("--combination", help="property codes (e.g. BPQ) or comma-separated names")
        p.add_argument("--mode", choices=[m.value for m in Mode])

    p = sub.add_parser("calibrate", help="set thresholds from score percentiles")
    common(p)
    p.add_argument("--default", action="store_true", help="emit the default registry unchanged")
    for name, helptext in (("build", "enumerate tasks and sample the test set"),
                           ("render", "render instruction prompts"),
                           ("generate", "query the generator for candidates"),
                           ("evaluate", "score candidates and write the report")):
        common(sub.add_parser(name, help=helptext))

    p = sub.add_parser("synth", help="write a synthetic desk-scale dataset")
    p.add_argument("--base", required=True, help="SMILES file (first column) of base molecules")
    p.add_argument("--out", required=True)
    p.add_argument("--pairs", type=int, default=2000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--salt", default="0")
    p.add_argument("--properties", help="comma-separated property names")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "synth":
            props = args.properties.split(",") if args.properties else None
            cmd_synth(Path(args.out), Path(args.base), args.pairs, args.seed, args.salt, props)
            return EXIT_OK
        overrides = {"seed": args.seed, "out": args.out, "registry": args.registry,
                     "combination": args.combination, "mode": args.mode}
        cfg = PipelineConfig.load(args.config, overrides)
        if args.command == "calibrate":
            cmd_calibrate(cfg, default=args.default)
        else:
            {"build": cmd_build, "render": cmd_render, "generate": cmd_generate,
             "evaluate": cmd_evaluate}[args.command](cfg)
    except ConfigError as exc:
        print(f"cmumo: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IngestionError as exc:
        print(f"cmumo: ingestion error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except GatewayError as exc:
        print(f"cmumo: backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
