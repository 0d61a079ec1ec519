"""Candidate generation: backends, prompt framing and response post-processing.

Every backend turns a framed prompt into completion texts. :func:`generate`
adds bounded retries for transient failures and converts completions into a
:class:`CandidateSet` of unique canonical SMILES. :func:`generate_many` runs
many requests with a bounded number in flight, restores request order and
records per-prompt failures without stopping the run.
"""

from __future__ import annotations

import enum
import json
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

from .instructions import RenderedPrompt, extract_smiles
from .molgraph import (
    AtomRecord,
    BondOrder,
    BondRecord,
    CanonicalSmiles,
    MolGraph,
    MolGraphError,
    canonical_smiles,
    canonicalize,
    parse_smiles,
)

DEFAULT_CANDIDATES = 20
API_KEY_ENV = "CMUMO_API_KEY"

SYSTEM_TEXT = (
    "You are an expert medicinal chemist specializing in molecular optimization. "
    "You understand how structural modifications affect key ADMET properties and "
    "inhibitions of common receptor targets like DRD2."
)
FEWSHOT_INSTRUCTION = (
    "Your task is to modify the given molecule to adjust specific molecular properties "
    "while keeping structural changes as minimal as possible. Use the examples (if provided) "
    "as a guide. Your response should only contain a valid  SMILES representation of the "
    "modified molecule enclosed with <SMILES> </SMILES> tag."
)


# --- errors -----------------------------------------------------------------

class GatewayError(RuntimeError):
    """Base class; ``prompt_id`` names the request that failed."""

    def __init__(self, message: str, prompt_id: str | None = None):
        super().__init__(message)
        self.prompt_id = prompt_id


class TransientError(GatewayError):
    """Retryable transport failure (timeouts, 5xx, rate limiting)."""


class BackendUnavailable(GatewayError):
    pass


class AuthError(GatewayError):
    pass


class QuotaExceeded(GatewayError):
    pass


# --- requests and results ---------------------------------------------------

@dataclass(frozen=True)
class GenerationParams:
    temperature: float | None = None
    beam_width: int | None = None
    max_tokens: int = 256


@dataclass(frozen=True)
class GenerationRequest:
    prompt: RenderedPrompt
    prompt_id: str
    n_candidates: int = DEFAULT_CANDIDATES
    params: GenerationParams = field(default_factory=GenerationParams)

    def __post_init__(self) -> None:
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")


@dataclass(frozen=True)
class CandidateSet:
    """Completions and the unique molecules parsed from them.

    ``rejects + n_valid == len(raw)``; ``parsed`` is ``n_valid`` molecules
    with duplicates removed, first occurrence kept.
    """

    raw: tuple[str, ...]
    parsed: tuple[CanonicalSmiles, ...]
    rejects: int
    n_valid: int

    def to_dict(self) -> dict:
        return {"raw": list(self.raw), "parsed": [c.text for c in self.parsed],
                "rejects": self.rejects, "n_valid": self.n_valid}

    @classmethod
    def from_completions(cls, raw: Sequence[str]) -> "CandidateSet":
        parsed: list[CanonicalSmiles] = []
        seen: set[str] = set()
        rejects = valid = 0
        for text in raw:
            found = extract_smiles(text)
            if not found:
                rejects += 1
                continue
            try:
                can = canonicalize(found[0])
            except MolGraphError:
                rejects += 1
                continue
            valid += 1
            if can.text not in seen:
                seen.add(can.text)
                parsed.append(can)
        return cls(tuple(raw), tuple(parsed), rejects, valid)


# --- framing ----------------------------------------------------------------

class Framing(str, enum.Enum):
    INST = "inst"       # tuned models: [INST] block around the full instruction
    SYSTEM = "system"   # general chat models: system text, fixed instruction, examples
    BARE = "bare"       # task sentence only


@dataclass(frozen=True)
class FewShotExample:
    task: str
    answer: str


def frame(prompt: RenderedPrompt, framing: Framing | str,
          example: FewShotExample | None = None) -> list[dict]:
    """Chat messages for ``prompt`` under ``framing``."""
    framing = Framing(framing)
    if framing is Framing.BARE:
        return [{"role": "user", "content": prompt.task_text}]
    if framing is Framing.INST:
        return [{"role": "user", "content": f"[INST]\n{prompt.instruction}\n\n[/INST]"}]
    examples = f"{example.task}\n{example.answer}" if example else ""
    body = (f"[INST]\n{FEWSHOT_INSTRUCTION}\n\nExamples:\n{examples}\n\n"
            f"Task:\n{prompt.task_text}\n[/INST]")
    return [{"role": "system", "content": SYSTEM_TEXT}, {"role": "user", "content": body}]


def frame_text(messages: Sequence[Mapping[str, str]]) -> str:
    """Flatten chat messages into one string (system text in ``<<SYS>>`` tags)."""
    parts = []
    for m in messages:
        if m["role"] == "system":
            parts.append(f"<<SYS>>\n{m['content']}\n<</SYS>>")
        else:
            parts.append(m["content"])
    return "\n\n".join(parts)


# --- backends ---------------------------------------------------------------

class GeneratorBackend(Protocol):
    name: str

    def complete(self, request: GenerationRequest, messages: list[dict]) -> list[str]:
        """Up to ``request.n_candidates`` completion texts."""


def _tag(smiles: str) -> str:
    return f"<SMILES> {smiles} </SMILES>"


def mock_mutate(source: CanonicalSmiles | str, n: int, seed: int = 0) -> list[CanonicalSmiles]:
    """Up to ``n`` distinct molecules: ``source`` first, then single edits.

    Edits are methyl, fluoro or chloro substitution of one hydrogen and
    removal of a terminal halogen or methyl group, tried in an order shuffled
    by ``seed`` and the input text. Every result is re-parsed before use.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    text = source.text if isinstance(source, CanonicalSmiles) else str(source)
    mol = parse_smiles(text)
    first = CanonicalSmiles(canonical_smiles(mol))
    out = [first]
    if n == 1:
        return out
    edits: list[tuple[str, int]] = []
    for i, a in enumerate(mol.atoms):
        if a.hydrogens > 0 and a.element in ("C", "N", "O", "S"):
            edits.extend((kind, i) for kind in ("C", "F", "Cl") if kind == "C" or a.element == "C")
        if (mol.degree(i) == 1 and a.charge == 0 and not a.isotope
                and (a.element in ("F", "Cl", "Br", "I") or (a.element == "C" and a.hydrogens == 3))):
            edits.append(("strip", i))
    rng = random.Random(f"{seed}|{text}")
    rng.shuffle(edits)
    seen = {first.text}
    for kind, i in edits:
        if len(out) >= n:
            break
        edited = _strip(mol, i) if kind == "strip" else _substitute(mol, i, kind)
        if edited is None:
            continue
        try:
            can = canonicalize(canonical_smiles(edited))
        except MolGraphError:
            continue
        if can.text not in seen:
            seen.add(can.text)
            out.append(can)
    return out


def _substitute(mol: MolGraph, i: int, element: str) -> MolGraph | None:
    atoms = list(mol.atoms)
    atoms[i] = replace(atoms[i], hydrogens=atoms[i].hydrogens - 1, chirality=None)
    atoms.append(AtomRecord(element, hydrogens=3 if element == "C" else 0))
    bonds = list(mol.bonds) + [BondRecord(i, len(atoms) - 1, BondOrder.SINGLE)]
    kek = list(mol.kekule_orders()) + [1]
    try:
        return MolGraph(atoms, bonds, kekule=kek)
    except MolGraphError:
        return None


def _strip(mol: MolGraph, i: int) -> MolGraph | None:
    if mol.num_atoms < 3:
        return None
    (nbr, bi), = mol.neighbors(i)
    if mol.bonds[bi].order is not BondOrder.SINGLE:
        return None
    remap = {old: new for new, old in enumerate(k for k in range(mol.num_atoms) if k != i)}
    atoms = []
    for k, a in enumerate(mol.atoms):
        if k == i:
            continue
        if k == nbr:
            a = replace(a, hydrogens=a.hydrogens + 1, chirality=None)
        atoms.append(a)
    kek_old = mol.kekule_orders()
    bonds, kek = [], []
    for k, b in enumerate(mol.bonds):
        if k == bi:
            continue
        stereo = b.stereo
        if stereo is not None and i in stereo[:2]:
            stereo = None
        elif stereo is not None:
            stereo = (remap[stereo[0]], remap[stereo[1]], stereo[2])
        bonds.append(replace(b, begin=remap[b.begin], end=remap[b.end], stereo=stereo))
        kek.append(kek_old[k])
    try:
        return MolGraph(atoms, bonds, kekule=kek)
    except MolGraphError:
        return None


@dataclass
class MockBackend:
    """Deterministic local mutator standing in for a model."""

    seed: int = 0
    name: str = "mock"

    def complete(self, request: GenerationRequest, messages: list[dict]) -> list[str]:
        mols = mock_mutate(request.prompt.source, request.n_candidates, self.seed)
        return [_tag(m.text) for m in mols]


@dataclass
class IdentityBackend:
    """Returns the input molecule unchanged."""

    name: str = "identity"

    def complete(self, request: GenerationRequest, messages: list[dict]) -> list[str]:
        return [_tag(request.prompt.source.text)]


@dataclass
class OracleBackend:
    """Returns known answers per source molecule (for metric checks)."""

    answers: Mapping[str, Sequence[str]]
    name: str = "oracle"

    def complete(self, request: GenerationRequest, messages: list[dict]) -> list[str]:
        picks = self.answers.get(request.prompt.source.text, ())
        return [_tag(s) for s in list(picks)[: request.n_candidates]]


@dataclass
class ChatCompletionBackend:
    """HTTP client for an OpenAI-style ``/chat/completions`` endpoint.

    The API key is read from the environment variable ``api_key_env``.
    Backends that cannot return several choices per call are called once per
    candidate (``supports_n=False``).
    """

    base_url: str
    model: str
    api_key_env: str = API_KEY_ENV
    supports_n: bool = True
    timeout: float = 60.0
    name: str = "chat"
    transport: object = None  # optional httpx transport, used by tests
    _client: object = field(default=None, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def _http(self):
        import httpx

        with self._lock:
            if self._client is None:
                headers = {}
                key = os.environ.get(self.api_key_env)
                if key:
                    headers["Authorization"] = f"Bearer {key}"
                self._client = httpx.Client(base_url=self.base_url.rstrip("/"), headers=headers,
                                            timeout=self.timeout, transport=self.transport)
            return self._client

    def _call(self, request: GenerationRequest, messages: list[dict], n: int) -> list[str]:
        import httpx

        body = {"model": self.model, "messages": messages, "n": n,
                "max_tokens": request.params.max_tokens}
        if request.params.temperature is not None:
            body["temperature"] = request.params.temperature
        pid = request.prompt_id
        try:
            resp = self._http().post("/chat/completions", json=body)
        except (httpx.TimeoutException, httpx.TransportError) as exc:
            raise TransientError(f"transport failure: {exc}", pid) from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"HTTP {resp.status_code} from {self.base_url}", pid)
        if resp.status_code == 402 or (resp.status_code == 429 and "quota" in resp.text.lower()):
            raise QuotaExceeded(f"HTTP {resp.status_code}: quota exhausted", pid)
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientError(f"HTTP {resp.status_code}", pid)
        if resp.status_code >= 400:
            raise BackendUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}", pid)
        try:
            choices = resp.json()["choices"]
            return [c["message"]["content"] or "" for c in choices]
        except (ValueError, KeyError, TypeError) as exc:
            raise BackendUnavailable(f"malformed response: {exc}", pid) from exc

    def complete(self, request: GenerationRequest, messages: list[dict]) -> list[str]:
        n = request.n_candidates
        if self.supports_n:
            return self._call(request, messages, n)[:n]
        out: list[str] = []
        for _ in range(n):
            out.extend(self._call(request, messages, 1)[:1])
        return out


# --- orchestration ----------------------------------------------------------

@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 4
    base_delay: float = 0.5
    max_delay: float = 8.0

    def delay(self, attempt: int) -> float:
        return min(self.max_delay, self.base_delay * 2 ** attempt)


def generate(request: GenerationRequest, backend: GeneratorBackend, *,
             framing: Framing | str = Framing.INST, example: FewShotExample | None = None,
             retry: RetryPolicy = RetryPolicy(),
             sleep: Callable[[float], None] = time.sleep) -> CandidateSet:
    """Query ``backend`` and post-process the completions.

    Raises
    ------
    BackendUnavailable
        Transient failures persisted through every retry.
    AuthError, QuotaExceeded
        Raised at once; retrying cannot help.
    """
    messages = frame(request.prompt, framing, example)
    for attempt in range(retry.max_attempts):
        try:
            raw = backend.complete(request, messages)
            break
        except TransientError as exc:
            if attempt + 1 == retry.max_attempts:
                raise BackendUnavailable(
                    f"{exc} (after {retry.max_attempts} attempts)", request.prompt_id) from exc
            sleep(retry.delay(attempt))
    return CandidateSet.from_completions(list(raw)[: request.n_candidates])


@dataclass
class GenerationOutcome:
    prompt_id: str
    candidates: CandidateSet | None = None
    error: GatewayError | None = None


def generate_many(requests: Sequence[GenerationRequest], backend: GeneratorBackend, *,
                  max_in_flight: int = 4, journal: "Journal | None" = None,
                  **kwargs) -> list[GenerationOutcome]:
    """Run ``requests`` concurrently; results come back in request order.

    Prompts already in ``journal`` are not re-queried. A failing prompt is
    recorded in its outcome and does not affect the others.
    """
    if max_in_flight < 1:
        raise ValueError("max_in_flight must be >= 1")
    done = journal.completed() if journal is not None else {}

    def one(req: GenerationRequest) -> GenerationOutcome:
        if req.prompt_id in done:
            return GenerationOutcome(req.prompt_id, done[req.prompt_id])
        try:
            cs = generate(req, backend, **kwargs)
        except GatewayError as exc:
            exc.prompt_id = exc.prompt_id or req.prompt_id
            return GenerationOutcome(req.prompt_id, error=exc)
        if journal is not None:
            journal.record(req.prompt_id, cs)
        return GenerationOutcome(req.prompt_id, cs)

    if max_in_flight == 1:
        return [one(r) for r in requests]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(one, requests))


class Journal:
    """Append-only JSON-lines record of completed prompts, for resuming runs."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def completed(self) -> dict[str, CandidateSet]:
        out: dict[str, CandidateSet] = {}
        if not self.path.exists():
            return out
        with self.path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    continue  # torn final line from an interrupted run
                out[rec["prompt_id"]] = CandidateSet.from_completions(rec["raw"])
        return out

    def record(self, prompt_id: str, cs: CandidateSet) -> None:
        line = json.dumps({"prompt_id": prompt_id, "raw": list(cs.raw)}, ensure_ascii=False)
        with self._lock:
            # Terminate a torn tail so the new record starts on its own line.
            if self.path.exists() and self.path.stat().st_size:
                with self.path.open("rb") as fh:
                    fh.seek(-1, os.SEEK_END)
                    if fh.read(1) != b"\n":
                        line = "\n" + line
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()


def backend_from_config(cfg: Mapping, answers: Mapping[str, Sequence[str]] | None = None) -> GeneratorBackend:
    """Build a backend from a ``generator`` config block."""
    kind = cfg.get("backend", "mock")
    if kind == "mock":
        return MockBackend(seed=int(cfg.get("seed", 0)))
    if kind == "identity":
        return IdentityBackend()
    if kind == "oracle":
        return OracleBackend(answers or {})
    if kind == "chat":
        return ChatCompletionBackend(
            base_url=cfg["base_url"], model=cfg["model"],
            api_key_env=cfg.get("api_key_env", API_KEY_ENV),
            supports_n=bool(cfg.get("supports_n", True)),
            timeout=float(cfg.get("timeout", 60.0)),
        )
    raise ValueError(f"unknown generator backend {kind!r}")

