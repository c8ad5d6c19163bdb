"""Generative backend contract, the deterministic fixture backend, and the
remote HTTP backend.

The contract is six structured calls: reformulate (query + keywords),
expand, identify_resources, fill_form, synthesize_table and plan_query.
Every call returns schema-validatable structured data. The fixture backend
is a rule engine (templates, a stop-word list, canned responses) loaded
from a JSON rules file, so CI never needs network and every output is a
pure function of the inputs.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources as importlib_resources
from pathlib import Path
from typing import Any, Protocol

import requests

from ._text import normalize_for_match, tokenize
from .errors import SchemaValidationError, TransportError

_QUOTED_RE = re.compile(r'"([^"]+)"|“([^”]+)”')


@dataclass
class ReformulateResult:
    retrieval_query: str
    keywords: list[str]


class GenerativeBackend(Protocol):
    """Structured calls every assistant backend provides."""

    def reformulate(self, query: str, knowledge: str | None = None) -> ReformulateResult: ...

    def expand(self, retrieval_query: str, contexts: list, k: int) -> list[str]: ...

    def identify_resources(
        self, query: str, retrieval_query: str, documents: list
    ) -> list[dict]: ...

    def fill_form(self, form, retrieval_query: str, keywords: list[str]) -> dict[str, str]: ...

    def synthesize_table(self, page_text: str, retrieval_query: str) -> dict | None: ...

    def plan_query(self, query: str, sources: list[dict]) -> dict | None: ...


def load_rules(path: str | Path | None = None) -> dict:
    if path is None:
        text = (
            importlib_resources.files("bioquery.data")
            .joinpath("assistant_rules.json")
            .read_text(encoding="utf-8")
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    return json.loads(text)


def _first_quoted(text: str) -> str | None:
    m = _QUOTED_RE.search(text)
    if not m:
        return None
    return m.group(1) or m.group(2)


class FixtureAssistant:
    """Deterministic rule engine standing in for a hosted model.

    Rules (all optional; see data/assistant_rules.json for the shipped set):
      reformulate_mode   "quoted_or_identity" (default) or "identity"
      stop_words         keyword extraction drop list
      canned_expansions  retrieval query (casefolded) -> expansion list
      expansion_template str.format template with {query} and {context_title}
      source_patterns    [{title_contains, source_name}] for identification
      identify_unmatched "skip" (default) or "title"
      plans              query text -> plan hints dict
    """

    def __init__(self, rules: dict | None = None):
        self.rules = load_rules() if rules is None else dict(rules)
        self.stop_words = set(self.rules.get("stop_words") or [])

    # -- reformulate -------------------------------------------------

    def reformulate(self, query: str, knowledge: str | None = None) -> ReformulateResult:
        mode = self.rules.get("reformulate_mode", "quoted_or_identity")
        retrieval = query.strip()
        if mode == "quoted_or_identity":
            quoted = _first_quoted(query) or (knowledge and _first_quoted(knowledge))
            if quoted:
                retrieval = quoted.strip()
        text = query if not knowledge else f"{query} {knowledge}"
        keywords = self._keywords(text)
        return ReformulateResult(retrieval_query=retrieval, keywords=keywords)

    def _keywords(self, text: str) -> list[str]:
        out: list[str] = []
        for tok in tokenize(text):
            if len(tok) < 2 or tok in self.stop_words:
                continue
            if tok not in out:
                out.append(tok)
        return out

    # -- expand ------------------------------------------------------

    def expand(self, retrieval_query: str, contexts: list, k: int) -> list[str]:
        canned = self.rules.get("canned_expansions", {}).get(
            retrieval_query.strip().casefold()
        )
        if canned:
            return list(canned)[:k]
        template = self.rules.get("expansion_template", "{query} {context_title}")
        out: list[str] = []
        for ctx in contexts:
            title = getattr(ctx, "title", str(ctx))
            candidate = template.format(query=retrieval_query, context_title=title).strip()
            if candidate and candidate not in out:
                out.append(candidate)
            if len(out) == k:
                break
        return out

    # -- identify ----------------------------------------------------

    def identify_resources(
        self, query: str, retrieval_query: str, documents: list
    ) -> list[dict]:
        patterns = self.rules.get("source_patterns", [])
        unmatched = self.rules.get("identify_unmatched", "skip")
        term = _first_quoted(query) or retrieval_query
        out: list[dict] = []
        for doc in documents:
            name = None
            for pat in patterns:
                if pat["title_contains"].casefold() in doc.title.casefold():
                    name = pat["source_name"]
                    break
            if name is None:
                if unmatched != "title":
                    continue
                name = " ".join(doc.title.split()[:4]) or doc.id
            out.append(
                {
                    "retrieval_query": term,
                    "source_name": name,
                    "data_link": doc.access_link,
                    "paper_title": doc.title,
                    "origin_doc": doc.id,
                }
            )
        return out

    # -- fill form ---------------------------------------------------

    def fill_form(self, form, retrieval_query: str, keywords: list[str]) -> dict[str, str]:
        assignments: dict[str, str] = {}
        fillable = [f for f in form.fields if f.kind not in ("hidden", "submit")]
        text_fields = [f for f in fillable if f.kind == "text"]
        for f in fillable:
            if f.kind == "text":
                if len(text_fields) == 1 or any(
                    normalize_for_match(f.name) == normalize_for_match(kw) for kw in keywords
                ):
                    assignments[f.name] = retrieval_query
            elif f.kind in ("select", "radio"):
                for option in f.options:
                    low = option.lower()
                    if any(kw in low for kw in keywords):
                        assignments[f.name] = option
                        break
        if not assignments and text_fields:
            assignments[text_fields[0].name] = retrieval_query
        return assignments

    # -- synthesize --------------------------------------------------

    _PAIR_RE = re.compile(r"^\s*([A-Za-z][A-Za-z0-9 _-]{0,40})\s*:\s*(.+?)\s*$")

    def synthesize_table(self, page_text: str, retrieval_query: str) -> dict | None:
        pairs: list[tuple[str, str]] = []
        for line in page_text.splitlines():
            m = self._PAIR_RE.match(line)
            if m:
                pairs.append((m.group(1).strip(), m.group(2).strip()))
        if len(pairs) < 2:
            return None
        return {
            "columns": ["Field", "Value"],
            "rows": [[k, v] for k, v in pairs],
        }

    # -- plan --------------------------------------------------------

    def plan_query(self, query: str, sources: list[dict]) -> dict | None:
        plans = self.rules.get("plans", {})
        return plans.get(query.strip()) or None


class RemoteAssistant:
    """HTTP assistant backend.

    POSTs ``{"task": ..., "model": ..., "prompt": ..., "payload": ...}`` to
    the configured endpoint and expects a JSON body answering the task
    schema. One structured-repair retry is attempted when the response
    fails validation, then SchemaValidationError is raised.
    """

    def __init__(
        self,
        base_url: str,
        model: str = "",
        api_key: str | None = None,
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self._session = session or requests.Session()

    def _prompt(self, name: str, **fields: str) -> str:
        text = (
            importlib_resources.files("bioquery.data.prompts")
            .joinpath(f"{name}.txt")
            .read_text(encoding="utf-8")
        )
        return text.format(**fields)

    def _call(self, task: str, payload: dict, prompt: str, repair_note: str = "") -> Any:
        body = {"task": task, "model": self.model, "prompt": prompt, "payload": payload}
        if repair_note:
            body["repair"] = repair_note
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._session.post(
                self.base_url, json=body, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise TransportError(f"assistant backend unreachable: {exc}") from exc
        if resp.status_code >= 500 or resp.status_code == 429:
            raise TransportError(f"assistant endpoint returned {resp.status_code}")
        try:
            return resp.json()
        except ValueError as exc:
            raise SchemaValidationError(f"assistant returned non-JSON body: {exc}") from exc

    def _validated(self, task: str, payload: dict, prompt: str, validate) -> Any:
        raw = self._call(task, payload, prompt)
        try:
            return validate(raw)
        except (KeyError, TypeError, ValueError, SchemaValidationError) as first:
            raw = self._call(task, payload, prompt, repair_note=f"invalid output: {first}")
            try:
                return validate(raw)
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaValidationError(
                    f"assistant output failed {task} schema twice: {exc}"
                ) from exc

    def reformulate(self, query: str, knowledge: str | None = None) -> ReformulateResult:
        prompt = self._prompt("reformulate", query=query, knowledge=knowledge or "")

        def validate(raw: Any) -> ReformulateResult:
            rq = str(raw["retrieval_query"]).strip()
            if not rq:
                raise ValueError("empty retrieval_query")
            kws = [str(k).lower() for k in raw["keywords"]]
            kws = [k for k in dict.fromkeys(kws) if len(k) >= 2]
            return ReformulateResult(retrieval_query=rq, keywords=kws)

        return self._validated(
            "reformulate", {"query": query, "knowledge": knowledge}, prompt, validate
        )

    def expand(self, retrieval_query: str, contexts: list, k: int) -> list[str]:
        ctx_text = "\n".join(f"- {getattr(c, 'title', c)}" for c in contexts)
        prompt = self._prompt("expand", query=retrieval_query, contexts=ctx_text, k=str(k))

        def validate(raw: Any) -> list[str]:
            items = [str(x).strip() for x in raw["expansions"]]
            items = [x for x in dict.fromkeys(items) if x]
            if not items:
                raise ValueError("no expansions")
            return items[:k]

        return self._validated(
            "expand",
            {"retrieval_query": retrieval_query, "k": k},
            prompt,
            validate,
        )

    def identify_resources(
        self, query: str, retrieval_query: str, documents: list
    ) -> list[dict]:
        doc_text = "\n".join(
            f"- id={d.id} title={d.title} link={d.access_link}" for d in documents
        )
        prompt = self._prompt("identify", query=query, documents=doc_text)

        def validate(raw: Any) -> list[dict]:
            out = []
            for item in raw["resources"]:
                out.append(
                    {
                        "retrieval_query": str(item["retrieval_query"]),
                        "source_name": str(item["source_name"]),
                        "data_link": str(item["data_link"]),
                        "paper_title": str(item.get("paper_title", "")),
                        "origin_doc": item.get("origin_doc"),
                    }
                )
            return out

        return self._validated(
            "identify",
            {"query": query, "documents": [d.id for d in documents]},
            prompt,
            validate,
        )

    def fill_form(self, form, retrieval_query: str, keywords: list[str]) -> dict[str, str]:
        fields_text = "\n".join(
            f"- {f.name} ({f.kind}){' options: ' + ', '.join(f.options) if f.options else ''}"
            for f in form.fields
        )
        prompt = self._prompt("fill_form", query=retrieval_query, fields=fields_text)

        def validate(raw: Any) -> dict[str, str]:
            return {str(k): str(v) for k, v in raw["assignments"].items()}

        return self._validated(
            "fill_form", {"retrieval_query": retrieval_query}, prompt, validate
        )

    def synthesize_table(self, page_text: str, retrieval_query: str) -> dict | None:
        prompt = self._prompt("synthesize_table", page=page_text[:4000])

        def validate(raw: Any) -> dict | None:
            if raw.get("columns") is None:
                return None
            cols = [str(c) for c in raw["columns"]]
            rows = [list(r) for r in raw["rows"]]
            if not cols:
                raise ValueError("empty columns")
            return {"columns": cols, "rows": rows}

        return self._validated(
            "synthesize_table", {"retrieval_query": retrieval_query}, prompt, validate
        )

    def plan_query(self, query: str, sources: list[dict]) -> dict | None:
        prompt = self._prompt("plan_query", query=query, sources=json.dumps(sources))

        def validate(raw: Any) -> dict | None:
            if raw.get("select") is None:
                return None
            return raw

        return self._validated("plan_query", {"query": query}, prompt, validate)
