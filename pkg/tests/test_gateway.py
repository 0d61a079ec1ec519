import json
import threading

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmumo.gateway import (
    AuthError,
    BackendUnavailable,
    CandidateSet,
    ChatCompletionBackend,
    FewShotExample,
    Framing,
    GenerationRequest,
    IdentityBackend,
    Journal,
    MockBackend,
    OracleBackend,
    QuotaExceeded,
    RetryPolicy,
    SYSTEM_TEXT,
    TransientError,
    backend_from_config,
    frame,
    frame_text,
    generate,
    generate_many,
    mock_mutate,
)
from cmumo.instructions import Mode, load_templates, render
from cmumo.molgraph import canonicalize, parse_smiles
from cmumo.properties import OptimizationObjective, PropertyRegistry
from cmumo.tasks import TestCase

from conftest import corpus_rows

REG = PropertyRegistry.default()
TEMPLATES, LEXICON = load_templates()
NO_WAIT = RetryPolicy(max_attempts=3, base_delay=0.0)


def prompt(smiles="CCO"):
    case = TestCase(canonicalize(smiles), {"QED": 0.5},
                    OptimizationObjective(frozenset({"QED"}), frozenset()))
    return render(case, TEMPLATES, LEXICON, REG, Mode.EVAL_SEEN, rng_seed=1)


def request(smiles="CCO", n=20, pid="p0"):
    return GenerationRequest(prompt(smiles), pid, n)


# --- mock mutator -------------------------------------------------------------

def test_mock_mutate_single_returns_input():
    assert mock_mutate("OCC", 1) == [canonicalize("CCO")]


def test_mock_mutate_deterministic_and_valid():
    src = corpus_rows()[0]["smiles"]
    a = mock_mutate(src, 20, seed=5)
    assert a == mock_mutate(src, 20, seed=5)
    assert a[0] == canonicalize(src)
    assert len({c.text for c in a}) == len(a)
    for c in a:
        assert canonicalize(c.text) == c


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([r["smiles"] for r in corpus_rows()[:200]]), st.integers(0, 1000), st.integers(1, 25))
def test_mock_mutate_outputs_reparse(smiles, seed, n):
    out = mock_mutate(smiles, n, seed)
    assert 1 <= len(out) <= n
    for c in out:
        parse_smiles(c.text)


def test_mock_mutate_rejects_bad_n():
    with pytest.raises(ValueError):
        mock_mutate("C", 0)


# --- candidate post-processing ------------------------------------------------

def test_unparseable_completion_is_a_reject():
    cs = CandidateSet.from_completions(["<SMILES> C( </SMILES>"])
    assert (cs.rejects, cs.n_valid, cs.parsed) == (1, 0, ())
    cs = CandidateSet.from_completions(["no tags", "<SMILES> OCC </SMILES>"])
    assert cs.rejects == 1 and cs.parsed == (canonicalize("CCO"),)


def test_duplicates_collapse():
    distinct = [f"<SMILES> {'C' * k}O </SMILES>" for k in range(1, 18)]
    raw = distinct + [distinct[0], "<SMILES> OCC </SMILES>", distinct[5]]
    cs = CandidateSet.from_completions(raw)
    assert len(raw) == 20
    assert len(cs.parsed) == 17 and cs.n_valid == 20 and cs.rejects == 0


@given(st.lists(st.sampled_from(["<SMILES> CCO </SMILES>", "<SMILES> OCC </SMILES>", "<SMILES> C( </SMILES>",
                                 "junk", "<SMILES> c1ccccc1 </SMILES>", "<SMILES> Q </SMILES>"]), max_size=25))
def test_candidate_accounting(raw):
    cs = CandidateSet.from_completions(raw)
    assert cs.rejects + cs.n_valid == len(raw)
    assert len(cs.parsed) <= cs.n_valid
    assert len({c.text for c in cs.parsed}) == len(cs.parsed)


# --- framing ------------------------------------------------------------------

def test_framings():
    rp = prompt()
    bare = frame(rp, "bare")
    assert bare == [{"role": "user", "content": rp.task_text}]
    inst = frame(rp, Framing.INST)
    assert inst[0]["content"].startswith("[INST]\n") and rp.instruction in inst[0]["content"]
    ex = FewShotExample("Modify <SMILES> C </SMILES>", "<SMILES> CO </SMILES>")
    sys = frame(rp, Framing.SYSTEM, ex)
    assert sys[0] == {"role": "system", "content": SYSTEM_TEXT}
    assert "Examples:\nModify <SMILES> C </SMILES>\n<SMILES> CO </SMILES>" in sys[1]["content"]
    assert f"Task:\n{rp.task_text}\n[/INST]" in sys[1]["content"]
    assert frame_text(sys).startswith("<<SYS>>\n" + SYSTEM_TEXT + "\n<</SYS>>\n\n[INST]")
    with pytest.raises(ValueError):
        frame(rp, "nope")


# --- local backends -----------------------------------------------------------

def test_local_backends():
    req = request("OCC", n=3)
    assert generate(req, IdentityBackend()).parsed == (canonicalize("CCO"),)
    oracle = OracleBackend({"CCO": ["CCN", "CCCl", "CCBr", "CCI"]})
    assert [c.text for c in generate(req, oracle).parsed] == ["CCN", "CCCl", "CCBr"]
    assert len(generate(req, MockBackend()).parsed) == 3
    assert isinstance(backend_from_config({"backend": "identity"}), IdentityBackend)
    with pytest.raises(ValueError):
        backend_from_config({"backend": "telepathy"})


# --- HTTP backend -------------------------------------------------------------

def chat(handler, **kw):
    return ChatCompletionBackend("http://test/v1", "m", transport=httpx.MockTransport(handler), **kw)


def ok(n):
    return httpx.Response(200, json={"choices": [{"message": {"content": "<SMILES> CCN </SMILES>"}}] * n})


def test_chat_backend_success_sends_n():
    seen = []

    def handler(req):
        body = json.loads(req.content)
        seen.append(body)
        return ok(body["n"])

    cs = generate(request(n=5), chat(handler), retry=NO_WAIT)
    assert cs.n_valid == 5 and [c.text for c in cs.parsed] == ["CCN"]
    assert len(seen) == 1 and seen[0]["n"] == 5 and seen[0]["model"] == "m"


def test_chat_backend_without_n_calls_repeatedly():
    calls = []

    def handler(req):
        calls.append(json.loads(req.content)["n"])
        return ok(1)

    cs = generate(request(n=4), chat(handler, supports_n=False), retry=NO_WAIT)
    assert calls == [1, 1, 1, 1] and cs.n_valid == 4


def test_api_key_from_environment(monkeypatch):
    monkeypatch.setenv("CMUMO_API_KEY", "sekrit")
    auth = []

    def handler(req):
        auth.append(req.headers.get("authorization"))
        return ok(1)

    generate(request(n=1), chat(handler), retry=NO_WAIT)
    assert auth == ["Bearer sekrit"]


@pytest.mark.parametrize("status, body, exc", [
    (401, "", AuthError),
    (403, "", AuthError),
    (402, "", QuotaExceeded),
    (429, '{"error": "insufficient_quota"}', QuotaExceeded),
])
def test_fatal_statuses_are_not_retried(status, body, exc):
    calls = []

    def handler(req):
        calls.append(1)
        return httpx.Response(status, text=body)

    with pytest.raises(exc) as info:
        generate(request(pid="p9"), chat(handler), retry=NO_WAIT)
    assert len(calls) == 1 and info.value.prompt_id == "p9"


@pytest.mark.parametrize("status", [429, 500, 503])
def test_transient_statuses_retry_then_give_up(status):
    calls, sleeps = [], []

    def handler(req):
        calls.append(1)
        return httpx.Response(status, text="busy")

    with pytest.raises(BackendUnavailable):
        generate(request(), chat(handler), retry=NO_WAIT, sleep=sleeps.append)
    assert len(calls) == 3 and len(sleeps) == 2


def test_transient_failure_recovers():
    calls = []

    def handler(req):
        calls.append(1)
        return httpx.Response(502) if len(calls) < 3 else ok(2)

    cs = generate(request(n=2), chat(handler), retry=NO_WAIT, sleep=lambda s: None)
    assert cs.n_valid == 2 and len(calls) == 3


def test_malformed_response():
    with pytest.raises(BackendUnavailable):
        generate(request(), chat(lambda req: httpx.Response(200, json={"nope": 1})), retry=NO_WAIT)


def test_retry_delay_backs_off():
    p = RetryPolicy(base_delay=0.5, max_delay=3.0)
    assert [p.delay(i) for i in range(4)] == [0.5, 1.0, 2.0, 3.0]


# --- concurrency and resume ---------------------------------------------------

class Flaky:
    name = "flaky"

    def __init__(self, bad):
        self.bad = bad
        self.calls = []
        self.lock = threading.Lock()

    def complete(self, req, messages):
        with self.lock:
            self.calls.append(req.prompt_id)
        if req.prompt_id in self.bad:
            raise AuthError("denied")
        return [f"<SMILES> {req.prompt.source.text} </SMILES>"]


def test_generate_many_keeps_order_and_isolates_errors():
    reqs = [request("C" * (i + 1), pid=f"p{i}") for i in range(12)]
    backend = Flaky({"p3", "p7"})
    out = generate_many(reqs, backend, max_in_flight=4, retry=NO_WAIT)
    assert [o.prompt_id for o in out] == [f"p{i}" for i in range(12)]
    assert [o.prompt_id for o in out if o.error] == ["p3", "p7"]
    assert all(o.error.prompt_id == o.prompt_id for o in out if o.error)
    assert [o.candidates.parsed[0].text for o in out if not o.error] == \
        ["C" * (i + 1) for i in range(12) if i not in (3, 7)]


def test_journal_resume_skips_done_prompts(tmp_path):
    reqs = [request("C" * (i + 1), pid=f"p{i}") for i in range(6)]
    journal = Journal(tmp_path / "run.journal")
    first = Flaky({"p2", "p4"})
    generate_many(reqs, first, max_in_flight=3, journal=journal, retry=NO_WAIT)
    with (tmp_path / "run.journal").open("a") as fh:
        fh.write('{"prompt_id": "p2", "ra')  # torn line from a crash
    second = Flaky(set())
    out = generate_many(reqs, second, max_in_flight=3, journal=journal, retry=NO_WAIT)
    assert sorted(second.calls) == ["p2", "p4"]
    assert all(o.error is None for o in out)
    assert set(journal.completed()) == {f"p{i}" for i in range(6)}


def test_max_in_flight_validated():
    with pytest.raises(ValueError):
        generate_many([], IdentityBackend(), max_in_flight=0)


def test_request_validation():
    with pytest.raises(ValueError):
        request(n=0)


def test_transient_error_is_gateway_error():
    assert issubclass(TransientError, Exception)
