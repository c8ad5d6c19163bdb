"""Run orchestration: the main flow, guided choice points, step logs,
forking re-choices and follow-up post-processing.

A run walks query processing, candidate ranking, resource identification,
per-resource wrapping (stored process descriptions short-circuit the
wrapper), plan compilation and execution. Guided runs pause for a human
at two points: which identified sources to access, and which harvested
link to follow for each source. Auto runs take the top-ranked options at
the same points, so a guided run that picks exactly those options
reproduces the auto result bit for bit.
"""

from __future__ import annotations

import logging
import re
import threading
import time
import uuid
from dataclasses import dataclass, field

from .assistant import GenerativeBackend
from .bioflow.ast import BioFlowQuery, ExtractClause, render_query
from .bioflow.execute import ExecutionReport, TableRegistryFacade, execute
from .bioflow.plan import SynonymTable, compile_plan, load_synonyms
from .corpus import CorpusIndex
from .embedding import EmbeddingBackend
from .errors import (
    CompileError,
    EngineError,
    NoCandidatesError,
    RunStateError,
    SessionExpiredError,
    UnsuitableSourceError,
)
from .fetch import Fetcher
from .keywords import KeywordBackend, SearchTrace
from .metrics import MetricsReport, compute_report, parse_run_lines
from .procdesc import OutputColumn, ProcessDescription, ProcessKB
from .queryproc import QueryBundle, process_query
from .resources import ResourceDescriptor, ScoredDocument, identify_resources, rank_candidates
from .table import DataTable
from .wrapper import SmartWrapper, WrapOutcome, execute_process

log = logging.getLogger(__name__)

STAGES = (
    "query_processed",
    "sources_ranked",
    "resource_chosen",
    "links_filtered",
    "link_chosen",
    "table_extracted",
    "plan_compiled",
    "plan_executed",
)


@dataclass
class EngineConfig:
    expansion_k: int = 5
    context_n: int = 4
    per_query_n: int = 4
    final_cut: int = 4
    min_combo: int = 2
    kw_budget: int = 64
    guided_timeout: float = 1800.0
    store_induced: bool = True
    example_queries: list[str] = field(default_factory=list)


@dataclass
class StepEvent:
    stage: str
    payload: dict
    timestamp: float

    def as_dict(self) -> dict:
        return {"stage": self.stage, "payload": self.payload, "timestamp": self.timestamp}


@dataclass
class ChoiceOption:
    id: str
    label: str
    detail: dict


@dataclass
class ChoiceRequest:
    run_id: str
    choice_kind: str  # source | link | confirm_table
    options: list[ChoiceOption]
    seq: int
    multi: bool = False

    def as_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "choice_kind": self.choice_kind,
            "seq": self.seq,
            "multi": self.multi,
            "options": [
                {"id": o.id, "label": o.label, "detail": o.detail} for o in self.options
            ],
        }


@dataclass
class ChoiceRecord:
    seq: int
    kind: str
    option_ids: list[str]
    selected: list[str]


@dataclass
class Run:
    id: str
    mode: str  # auto | guided
    query: str
    knowledge: str | None = None
    state: str = "pending"  # pending | awaiting_choice | executing | done | failed
    steps: list[StepEvent] = field(default_factory=list)
    result: DataTable | None = None
    error: dict | None = None
    choices: list[ChoiceRecord] = field(default_factory=list)
    outstanding: ChoiceRequest | None = None
    base_run_id: str | None = None
    meta: dict = field(default_factory=dict)
    created_at: float = field(default_factory=time.time)
    updated_at: float = field(default_factory=time.time)

    def as_dict(self, include_steps: bool = True) -> dict:
        out = {
            "id": self.id,
            "mode": self.mode,
            "query": self.query,
            "knowledge": self.knowledge,
            "state": self.state,
            "error": self.error,
            "base_run_id": self.base_run_id,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "n_steps": len(self.steps),
            "outstanding_choice": self.outstanding.as_dict() if self.outstanding else None,
            "has_result": self.result is not None,
        }
        if include_steps:
            out["steps"] = [s.as_dict() for s in self.steps]
        return out


class InMemoryRunStore:
    """Snapshot store; the engine keeps live runs, this keeps history."""

    def __init__(self) -> None:
        self._snapshots: dict[str, dict] = {}
        self._lock = threading.Lock()

    def put(self, run_id: str, snapshot: dict) -> None:
        with self._lock:
            self._snapshots[run_id] = snapshot

    def get(self, run_id: str) -> dict | None:
        with self._lock:
            return self._snapshots.get(run_id)

    def ids(self) -> list[str]:
        with self._lock:
            return list(self._snapshots)


class FileRunStore(InMemoryRunStore):
    """JSON-file-per-run persistence surviving restarts."""

    def __init__(self, directory) -> None:
        super().__init__()
        import json
        from pathlib import Path

        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        for path in self.directory.glob("*.json"):
            try:
                super().put(path.stem, json.loads(path.read_text(encoding="utf-8")))
            except (OSError, ValueError):
                continue

    def put(self, run_id: str, snapshot: dict) -> None:
        import json

        super().put(run_id, snapshot)
        tmp = self.directory / f".{run_id}.tmp"
        tmp.write_text(json.dumps(snapshot), encoding="utf-8")
        tmp.replace(self.directory / f"{run_id}.json")


_FOLLOWUP_MERGE = re.compile(r"^\s*merge\s+with\s+(\S+)(?:\s+on\s+(\S+))?\s*$", re.I)
_FOLLOWUP_FILTER = re.compile(
    r"^\s*filter\s+(\S+)\s+(=|like)\s+'(.*)'\s*$", re.I
)
_FOLLOWUP_SELECT = re.compile(r"^\s*select\s+(.+?)\s*$", re.I)


class Engine:
    def __init__(
        self,
        index: CorpusIndex,
        embedder: EmbeddingBackend,
        assistant: GenerativeBackend,
        fetcher: Fetcher,
        kw_backend: KeywordBackend | None,
        kb: ProcessKB,
        wrapper: SmartWrapper | None = None,
        store: InMemoryRunStore | None = None,
        config: EngineConfig | None = None,
        synonyms: SynonymTable | None = None,
    ):
        self.index = index
        self.embedder = embedder
        self.assistant = assistant
        self.fetcher = fetcher
        self.kw_backend = kw_backend
        self.kb = kb
        self.wrapper = wrapper or SmartWrapper(fetcher, embedder, assistant)
        self.store = store or InMemoryRunStore()
        self.config = config or EngineConfig()
        self.synonyms = synonyms or load_synonyms()

        self._runs: dict[str, Run] = {}
        self._conds: dict[str, threading.Condition] = {}
        self._selections: dict[str, list[str]] = {}
        self._scripted: dict[str, list[list[str]]] = {}
        self._lock = threading.Lock()

    # -- run bookkeeping ---------------------------------------------

    def _new_run(self, mode: str, query: str, knowledge: str | None) -> Run:
        run = Run(id=uuid.uuid4().hex[:12], mode=mode, query=query, knowledge=knowledge)
        with self._lock:
            self._runs[run.id] = run
            self._conds[run.id] = threading.Condition()
        self._persist(run)
        return run

    def _persist(self, run: Run) -> None:
        run.updated_at = time.time()
        snapshot = run.as_dict(include_steps=True)
        if run.result is not None:
            snapshot["result"] = {
                "columns": [{"name": c.name, "type": c.type} for c in run.result.columns],
                "rows": run.result.rows,
                "provenance": run.result.provenance,
            }
        snapshot["choices"] = [
            {"seq": c.seq, "kind": c.kind, "option_ids": c.option_ids, "selected": c.selected}
            for c in run.choices
        ]
        self.store.put(run.id, snapshot)

    def get_run(self, run_id: str) -> Run:
        with self._lock:
            run = self._runs.get(run_id)
        if run is None:
            raise RunStateError(f"no run {run_id!r}")
        return run

    def _cond(self, run_id: str) -> threading.Condition:
        with self._lock:
            return self._conds[run_id]

    def _step(self, run: Run, stage: str, payload: dict) -> None:
        cond = self._cond(run.id)
        with cond:
            run.steps.append(StepEvent(stage=stage, payload=payload, timestamp=time.time()))
            self._persist(run)
            cond.notify_all()

    def _set_state(self, run: Run, state: str) -> None:
        cond = self._cond(run.id)
        with cond:
            run.state = state
            self._persist(run)
            cond.notify_all()

    def steps_snapshot(self, run_id: str) -> list[dict]:
        run = self.get_run(run_id)
        cond = self._cond(run_id)
        with cond:
            return [s.as_dict() for s in run.steps]

    # -- public API ----------------------------------------------------

    def submit(
        self,
        query: str,
        mode: str = "auto",
        knowledge: str | None = None,
        scripted_choices: list[list[str]] | None = None,
    ) -> Run:
        if mode not in ("auto", "guided"):
            raise ValueError(f"unknown mode {mode!r}")
        run = self._new_run(mode, query, knowledge)
        if scripted_choices:
            self._scripted[run.id] = [list(c) for c in scripted_choices]
        thread = threading.Thread(target=self._pipeline_main, args=(run,), daemon=True)
        thread.start()
        return run

    def wait(self, run_id: str, timeout: float = 120.0) -> Run:
        """Block until the run reaches done/failed (or awaiting a choice
        forever would deadlock the caller, so that state raises)."""
        run = self.get_run(run_id)
        cond = self._cond(run_id)
        deadline = time.monotonic() + timeout
        with cond:
            while run.state not in ("done", "failed"):
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TimeoutError(f"run {run_id} still {run.state} after {timeout}s")
                cond.wait(timeout=min(remaining, 1.0))
        return run

    def wait_for_choice(self, run_id: str, timeout: float = 30.0) -> ChoiceRequest:
        run = self.get_run(run_id)
        cond = self._cond(run_id)
        deadline = time.monotonic() + timeout
        with cond:
            while run.outstanding is None:
                if run.state in ("done", "failed"):
                    raise RunStateError(f"run {run_id} finished without a pending choice")
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TimeoutError("no choice requested in time")
                cond.wait(timeout=min(remaining, 0.5))
            return run.outstanding

    def run_auto(self, query: str, knowledge: str | None = None, timeout: float = 120.0) -> Run:
        run = self.submit(query, mode="auto", knowledge=knowledge)
        return self.wait(run.id, timeout=timeout)

    def run_guided(
        self,
        query: str,
        knowledge: str | None = None,
        scripted_choices: list[list[str]] | None = None,
        timeout: float = 120.0,
    ) -> Run:
        run = self.submit(
            query, mode="guided", knowledge=knowledge, scripted_choices=scripted_choices
        )
        if scripted_choices is not None:
            return self.wait(run.id, timeout=timeout)
        return run

    def submit_choice(self, run_id: str, option_ids: str | list[str]) -> Run:
        ids = [option_ids] if isinstance(option_ids, str) else list(option_ids)
        if not ids:
            raise RunStateError("no option selected")
        run = self.get_run(run_id)
        cond = self._cond(run_id)
        with cond:
            if run.state in ("done", "failed"):
                return self._fork_rechoice(run, ids)
            if run.state != "awaiting_choice" or run.outstanding is None:
                raise RunStateError(
                    f"run {run_id} is {run.state}; there is no outstanding choice"
                )
            request = run.outstanding
            valid = {o.id for o in request.options}
            unknown = [i for i in ids if i not in valid]
            if unknown:
                raise RunStateError(f"unknown option ids: {', '.join(unknown)}")
            if not request.multi and len(ids) != 1:
                raise RunStateError("this choice accepts exactly one option")
            run.choices.append(
                ChoiceRecord(
                    seq=request.seq,
                    kind=request.choice_kind,
                    option_ids=sorted(valid),
                    selected=ids,
                )
            )
            self._selections[run.id] = ids
            run.outstanding = None
            run.state = "executing"
            self._persist(run)
            cond.notify_all()
        return run

    def _fork_rechoice(self, run: Run, ids: list[str]) -> Run:
        """Re-choice on a finished run: fork a new run that replays the
        recorded choices before the target point, then takes the new pick."""
        m = re.match(r"^c(\d+)o\d+", ids[0])
        if not m:
            raise RunStateError(f"option id {ids[0]!r} does not name a past choice")
        seq = int(m.group(1))
        past = [c for c in run.choices if c.seq == seq]
        if not past:
            raise RunStateError(f"run {run.id} has no choice point {seq}")
        known = set(past[0].option_ids)
        unknown = [i for i in ids if i not in known]
        if unknown:
            raise RunStateError(f"unknown option ids for choice {seq}: {', '.join(unknown)}")
        scripted = [c.selected for c in run.choices if c.seq < seq]
        scripted.append(ids)
        forked = self.submit(
            run.query, mode="guided", knowledge=run.knowledge, scripted_choices=scripted
        )
        forked.base_run_id = run.id
        return forked

    # -- choice plumbing -----------------------------------------------

    def _await_choice(
        self, run: Run, kind: str, options: list[ChoiceOption], multi: bool, auto_pick: list[str]
    ) -> list[str]:
        scripted = self._scripted.get(run.id)
        if scripted:
            picked = scripted.pop(0)
            valid = {o.id for o in options}
            bad = [p for p in picked if p not in valid]
            if bad:
                raise RunStateError(f"scripted choice names unknown options: {bad}")
            run.choices.append(
                ChoiceRecord(seq=len(run.choices), kind=kind, option_ids=sorted(valid), selected=picked)
            )
            return picked
        if run.mode == "auto":
            run.choices.append(
                ChoiceRecord(
                    seq=len(run.choices),
                    kind=kind,
                    option_ids=sorted(o.id for o in options),
                    selected=auto_pick,
                )
            )
            return auto_pick
        cond = self._cond(run.id)
        with cond:
            request = ChoiceRequest(
                run_id=run.id,
                choice_kind=kind,
                options=options,
                seq=len(run.choices),
                multi=multi,
            )
            run.outstanding = request
            run.state = "awaiting_choice"
            self._persist(run)
            cond.notify_all()
            deadline = time.monotonic() + self.config.guided_timeout
            while self._selections.get(run.id) is None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    run.outstanding = None
                    raise SessionExpiredError(
                        f"guided session waited {self.config.guided_timeout}s for a choice"
                    )
                cond.wait(timeout=remaining)
            return self._selections.pop(run.id)

    # -- pipeline ------------------------------------------------------

    def _pipeline_main(self, run: Run) -> None:
        try:
            self._set_state(run, "executing")
            self._execute_query_pipeline(run)
        except EngineError as exc:
            self._fail(run, exc)
        except Exception as exc:  # defensive: a bug must not hang pollers
            log.exception("run %s crashed", run.id)
            self._fail(run, EngineError(str(exc)))
        finally:
            self._scripted.pop(run.id, None)

    def _fail(self, run: Run, exc: EngineError) -> None:
        cond = self._cond(run.id)
        with cond:
            run.error = {"code": getattr(exc, "code", "engine_error"), "message": str(exc)}
            run.state = "failed"
            run.outstanding = None
            self._persist(run)
            cond.notify_all()

    def _execute_query_pipeline(self, run: Run) -> None:
        cfg = self.config
        bundle = process_query(
            run.query,
            self.assistant,
            self.index,
            self.embedder,
            k=cfg.expansion_k,
            n_contexts=cfg.context_n,
            knowledge=run.knowledge,
        )
        run.meta["bundle"] = {
            "retrieval_query": bundle.retrieval_query,
            "expanded": bundle.expanded,
            "keywords": bundle.keywords,
            "contexts": bundle.contexts,
            "provenance": bundle.provenance,
        }
        self._step(
            run,
            "query_processed",
            {
                "retrieval_query": bundle.retrieval_query,
                "expanded": bundle.expanded,
                "keywords": bundle.keywords,
                "contexts": bundle.contexts,
            },
        )

        trace = SearchTrace()
        ranked = rank_candidates(
            bundle.retrieval_query,
            bundle.expanded,
            bundle.keywords,
            self.index,
            self.kw_backend,
            self.embedder,
            per_query_n=cfg.per_query_n,
            final_cut=cfg.final_cut,
            min_combo=cfg.min_combo,
            budget=cfg.kw_budget,
            trace=trace,
        )
        self._step(
            run,
            "sources_ranked",
            {
                "candidates": [
                    {"doc_id": s.document.id, "title": s.document.title, "score": s.score}
                    for s in ranked
                ],
                "keyword_queries": trace.issued,
                "keyword_query_errors": trace.errors,
                "keyword_budget_exhausted": trace.budget_exhausted,
            },
        )

        descriptors = identify_resources(
            run.query, ranked, self.assistant, bundle.retrieval_query
        )
        if not descriptors:
            raise NoCandidatesError("no data sources identified among the candidates")

        options = [
            ChoiceOption(
                id=f"c{len(run.choices)}o{i}",
                label=d.source_name,
                detail={
                    "paper_title": d.paper_title,
                    "data_link": d.data_link,
                    "rank_score": d.rank_score,
                    "origin_doc": d.origin_doc,
                },
            )
            for i, d in enumerate(descriptors)
        ]
        auto_pick = [o.id for o in options]
        chosen_ids = self._await_choice(run, "source", options, multi=True, auto_pick=auto_pick)
        id_to_desc = dict(zip([o.id for o in options], descriptors))
        chosen = [id_to_desc[i] for i in chosen_ids if i in id_to_desc]
        self._step(
            run,
            "resource_chosen",
            {
                "sources": [
                    {"source_name": d.source_name, "data_link": d.data_link} for d in chosen
                ]
            },
        )

        tables: dict[str, DataTable] = {}
        failures: dict[str, str] = {}
        for descriptor in chosen:
            table = self._wrap_resource(run, bundle, descriptor, failures)
            if table is not None:
                tables[descriptor.data_link] = table
        if not tables:
            raise UnsuitableSourceError(
                "every chosen source was unsuitable: "
                + "; ".join(f"{k}: {v}" for k, v in failures.items()),
                error_class="no_tables",
            )

        usable = [d for d in chosen if d.data_link in tables]
        plan = compile_plan(
            run.query,
            usable,
            self.kb,
            self.assistant,
            discovered_columns={link: t.column_names for link, t in tables.items()},
            synonyms=self.synonyms,
            retrieval_term=bundle.retrieval_query,
        )
        self._step(run, "plan_compiled", {"bioflow": render_query(plan)})

        facade = TableRegistryFacade(tables, retrieval_term=bundle.retrieval_query)
        report = ExecutionReport()
        result = execute(plan, facade, kb=self.kb, synonyms=self.synonyms, report=report)
        if failures:
            result.provenance.setdefault("partial_failures", {}).update(failures)
        cond = self._cond(run.id)
        with cond:
            run.result = result
        self._step(
            run,
            "plan_executed",
            {
                "columns": result.column_names,
                "n_rows": result.n_rows,
                "join_columns": report.join_columns,
            },
        )
        self._set_state(run, "done")

    def _wrap_resource(
        self,
        run: Run,
        bundle: QueryBundle,
        descriptor: ResourceDescriptor,
        failures: dict[str, str],
    ) -> DataTable | None:
        term = descriptor.retrieval_query or bundle.retrieval_query
        pd = self.kb.lookup_url(descriptor.data_link) if self.kb is not None else None
        if pd is not None:
            try:
                table = execute_process(
                    pd, term, bundle.keywords, self.fetcher, self.assistant, self.embedder
                )
                self._step(
                    run,
                    "table_extracted",
                    {
                        "source": descriptor.data_link,
                        "kb_process": pd.name,
                        "method": "process_description",
                        "columns": table.column_names,
                        "n_rows": table.n_rows,
                    },
                )
                return table
            except EngineError as exc:
                log.warning(
                    "stored process %s failed (%s); falling back to wrapper", pd.name, exc
                )

        try:
            survey = self.wrapper.survey(descriptor.data_link, term)
        except EngineError as exc:
            failures[descriptor.data_link] = f"{getattr(exc, 'code', 'error')}: {exc}"
            self._step(
                run,
                "table_extracted",
                {
                    "source": descriptor.data_link,
                    "unsuitable": True,
                    "error_class": getattr(exc, "code", "error"),
                },
            )
            return None
        self._step(
            run,
            "links_filtered",
            {
                "source": descriptor.data_link,
                "harvested": len(survey.links),
                "links": [
                    {
                        "url": l.url,
                        "anchor_text": l.anchor_text,
                        "relevance": l.relevance,
                        "classification": l.classification,
                    }
                    for l in survey.kept
                ],
            },
        )

        candidates = [l for l in survey.kept if l.url in survey.candidates]
        outcome: WrapOutcome
        if candidates:
            # the strict-priority pick is computed up front: it is the
            # auto-selected option, recorded even in auto mode so a later
            # guided replay can take the identical path
            auto_outcome = self.wrapper.wrap_from_survey(survey, term, bundle.keywords)
            options = [
                ChoiceOption(
                    id=f"c{len(run.choices)}o{i}",
                    label=l.anchor_text or l.url,
                    detail={
                        "url": l.url,
                        "classification": l.classification,
                        "relevance": l.relevance,
                    },
                )
                for i, l in enumerate(candidates)
            ]
            auto_ids = [
                o.id
                for o, l in zip(options, candidates)
                if auto_outcome.link is not None and l.url == auto_outcome.link.url
            ] or [options[0].id]
            picked = self._await_choice(run, "link", options, multi=False, auto_pick=auto_ids[:1])
            picked_link = candidates[[o.id for o in options].index(picked[0])]
            if auto_outcome.link is not None and picked_link.url == auto_outcome.link.url:
                outcome = auto_outcome
            else:
                table = self.wrapper.access(survey, picked_link, term, bundle.keywords)
                outcome = WrapOutcome(
                    table=table,
                    unsuitable=table is None,
                    error_class=None if table is not None else "no_data",
                    link=picked_link,
                    survey=survey,
                )
        else:
            outcome = self.wrapper.wrap_from_survey(survey, term, bundle.keywords)

        if outcome.link is not None:
            self._step(
                run,
                "link_chosen",
                {
                    "source": descriptor.data_link,
                    "url": outcome.link.url,
                    "classification": outcome.link.classification,
                },
            )
        if not outcome.ok:
            failures[descriptor.data_link] = outcome.error_class or "no_data"
            self._step(
                run,
                "table_extracted",
                {
                    "source": descriptor.data_link,
                    "unsuitable": True,
                    "error_class": outcome.error_class,
                    "detail": outcome.detail,
                },
            )
            return None

        table = outcome.table
        assert table is not None
        self._step(
            run,
            "table_extracted",
            {
                "source": descriptor.data_link,
                "method": table.provenance.get("method", ""),
                "columns": table.column_names,
                "n_rows": table.n_rows,
            },
        )
        if self.config.store_induced and self.kb is not None and pd is None:
            access_url = outcome.link.url if outcome.link is not None else descriptor.data_link
            self._store_induced(descriptor, table, access_url)
        return table

    def _store_induced(
        self, descriptor: ResourceDescriptor, table: DataTable, access_url: str
    ) -> None:
        name = re.sub(r"[^A-Za-z0-9_]", "", descriptor.source_name.title().replace(" ", ""))
        if not name or not re.match(r"^[A-Za-z_]", name):
            name = f"Source{name or 'X'}"
        if self.kb.get(name) is not None:
            return
        columns = []
        for col in table.columns:
            kind = "int" if col.type == "integer" else "string"
            values = table.column_values(col.name)
            unique = len(values) == len({str(v) for v in values}) and table.n_rows > 0
            columns.append(OutputColumn(name=_safe_ident(col.name), type=kind, primary_key=False))
            if unique and not any(c.primary_key for c in columns[:-1]):
                columns[-1] = OutputColumn(
                    name=columns[-1].name, type=columns[-1].type, primary_key=True
                )
        seen: set[str] = set()
        deduped = []
        for c in columns:
            if c.name in seen:
                continue
            seen.add(c.name)
            deduped.append(c)
        pk_seen = False
        final_cols = []
        for c in deduped:
            if c.primary_key and pk_seen:
                final_cols.append(OutputColumn(c.name, c.type, False))
            else:
                pk_seen = pk_seen or c.primary_key
                final_cols.append(c)
        try:
            self.kb.add(
                ProcessDescription(
                    name=name,
                    url=access_url,
                    access_mode="browser",
                    filters=(),
                    output_columns=tuple(final_cols),
                    postfix=None,
                )
            )
        except EngineError as exc:
            log.warning("could not store induced process %s: %s", name, exc)

    # -- follow-up post-processing --------------------------------------

    def followup_postprocess(self, run_id: str, followup: str) -> Run:
        base = self.get_run(run_id)
        if base.state != "done" or base.result is None:
            raise RunStateError(f"run {run_id} has no completed result to post-process")
        new_run = self._new_run("auto", followup, None)
        new_run.base_run_id = base.id
        thread = threading.Thread(
            target=self._pipeline_followup, args=(new_run, base, followup), daemon=True
        )
        thread.start()
        return new_run

    def _pipeline_followup(self, run: Run, base: Run, followup: str) -> None:
        try:
            self._set_state(run, "executing")
            self._execute_followup(run, base, followup)
        except EngineError as exc:
            self._fail(run, exc)
        except Exception as exc:
            log.exception("follow-up run %s crashed", run.id)
            self._fail(run, EngineError(str(exc)))

    def _execute_followup(self, run: Run, base: Run, followup: str) -> None:
        base_table = base.result
        assert base_table is not None
        bundle_meta = base.meta.get("bundle", {})
        term = bundle_meta.get("retrieval_query", "")
        keywords = bundle_meta.get("keywords", [])

        merge = _FOLLOWUP_MERGE.match(followup)
        filt = _FOLLOWUP_FILTER.match(followup)
        select = _FOLLOWUP_SELECT.match(followup) if not merge and not filt else None

        if merge:
            url, on_column = merge.group(1), merge.group(2)
            outcome = self.wrapper.wrap(url, term or run.query, keywords)
            if not outcome.ok:
                raise UnsuitableSourceError(
                    f"follow-up source {url} unsuitable: {outcome.error_class}",
                    error_class=outcome.error_class or "no_data",
                )
            new_table = outcome.table
            assert new_table is not None
            self._step(
                run,
                "table_extracted",
                {"source": url, "columns": new_table.column_names, "n_rows": new_table.n_rows},
            )
            result = self._merge_tables(run, base, base_table, new_table, url, on_column)
        elif filt:
            column, op, literal = filt.group(1), filt.group(2).lower(), filt.group(3)
            result = self._filter_project(run, base, base_table, [(column, op, literal)], None)
        elif select:
            columns = [c.strip() for c in select.group(1).split(",") if c.strip()]
            if not columns:
                raise CompileError("follow-up select names no columns")
            result = self._filter_project(run, base, base_table, [], columns)
        else:
            raise CompileError(
                "follow-up not understood; expected 'merge with <url> [on <column>]', "
                "\"filter <column> = '<value>'\" or 'select <columns>'"
            )

        cond = self._cond(run.id)
        with cond:
            run.result = result
        self._step(
            run,
            "plan_executed",
            {"columns": result.column_names, "n_rows": result.n_rows},
        )
        self._set_state(run, "done")

    def _merge_tables(
        self,
        run: Run,
        base: Run,
        base_table: DataTable,
        new_table: DataTable,
        url: str,
        on_column: str | None,
    ) -> DataTable:
        from .bioflow.plan import canonical_attribute

        base_url = f"run://{base.id}"
        base_attrs = _dedup(
            canonical_attribute(c, self.synonyms) for c in base_table.column_names
        )
        new_attrs = _dedup(
            canonical_attribute(c, self.synonyms) for c in new_table.column_names
        )
        if on_column:
            on_attr = canonical_attribute(on_column, self.synonyms)
            if on_attr not in base_attrs:
                raise CompileError(f"column {on_column!r} is not in the base result")
            if on_attr not in new_attrs:
                raise CompileError(f"column {on_column!r} is not in the merged source")
            # restrict the join to the requested column
            new_attrs = [a for a in new_attrs if a == on_attr or a not in base_attrs]
        select = base_attrs + [a for a in new_attrs if a not in base_attrs]
        plan = BioFlowQuery(
            with_clauses=(
                _with_clause("base", base_attrs, base_url),
                _with_clause("merged", new_attrs, url),
            ),
            select_columns=tuple(select),
            where_predicates=(),
        )
        self._step(run, "plan_compiled", {"bioflow": render_query(plan)})
        facade = TableRegistryFacade({base_url: base_table, url: new_table})
        return execute(plan, facade, synonyms=self.synonyms)

    def _filter_project(
        self,
        run: Run,
        base: Run,
        base_table: DataTable,
        predicates: list[tuple[str, str, str]],
        columns: list[str] | None,
    ) -> DataTable:
        from .bioflow.ast import Predicate
        from .bioflow.plan import canonical_attribute

        base_url = f"run://{base.id}"
        base_attrs = _dedup(
            canonical_attribute(c, self.synonyms) for c in base_table.column_names
        )
        for column, _op, _lit in predicates:
            if canonical_attribute(column, self.synonyms) not in base_attrs:
                raise CompileError(f"column {column!r} is not in the base result")
        select = columns if columns else base_attrs
        for column in select:
            if canonical_attribute(column, self.synonyms) not in base_attrs:
                raise CompileError(f"column {column!r} is not in the base result")
        plan = BioFlowQuery(
            with_clauses=(_with_clause("base", base_attrs, base_url),),
            select_columns=tuple(
                canonical_attribute(c, self.synonyms) for c in select
            ),
            where_predicates=tuple(
                Predicate(column=canonical_attribute(c, self.synonyms), op=op, literal=lit)
                for c, op, lit in predicates
            ),
        )
        self._step(run, "plan_compiled", {"bioflow": render_query(plan)})
        facade = TableRegistryFacade({base_url: base_table})
        return execute(plan, facade, synonyms=self.synonyms)

    # -- evaluation ------------------------------------------------------

    def evaluate_run_lines(self, lines: list[str], k: int = 4, m: int = 4) -> MetricsReport:
        return compute_report(parse_run_lines(lines, k=k, m=m))


def _safe_ident(name: str) -> str:
    out = re.sub(r"[^A-Za-z0-9_]", "", name)
    if not out or not re.match(r"^[A-Za-z_]", out):
        out = f"c_{out}" if out else "column"
    return out


def _dedup(items) -> list[str]:
    out: list[str] = []
    for item in items:
        if item not in out:
            out.append(item)
    return out


def _with_clause(alias: str, attributes: list[str], url: str):
    from .bioflow.ast import WithClause

    return WithClause(
        alias=alias,
        extract=ExtractClause(
            attributes=tuple(attributes),
            matcher="S-match",
            wrapper="Web-Prospector",
            source_url=url,
            submit_binding=alias,
        ),
    )
