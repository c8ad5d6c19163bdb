"""Run orchestration: auto and guided modes, choices, forks, follow-ups."""

from __future__ import annotations

import threading
import time

import pytest

from bioquery.corpus import build_index
from bioquery.engine import STAGES, FileRunStore
from bioquery.errors import RunStateError
from bioquery.fixtures import EXAMPLE_QUERY
from bioquery.procdesc import parse_pd
from tests.conftest import (
    ANNOT_BASE,
    EXPECTED_JOIN_CSV,
    MIKDB_BASE,
    UNIPROT_BASE,
    make_engine,
)


def stages_of(run):
    return [s.stage for s in run.steps]


class TestAutoRun:
    def test_worked_example_full_pipeline(self, engine):
        run = engine.run_auto(EXAMPLE_QUERY)
        assert run.state == "done", run.error
        assert run.result is not None
        assert run.result.render_delimited(",") == EXPECTED_JOIN_CSV
        # every lifecycle stage appears, in order
        seen = stages_of(run)
        positions = [seen.index(stage) for stage in STAGES]
        assert positions == sorted(positions)
        assert set(STAGES) <= set(seen)

    def test_kb_hit_skips_wrapper_discovery(self, fixture_index, embedder, fixture_fetcher, tmp_path):
        from bioquery.procdesc import ProcessKB

        kb = ProcessKB(tmp_path / "kb")
        kb.add(
            parse_pd(
                f"""create process MikdbStored
                  at {MIKDB_BASE}/search.html
                  access browser
                  accepts filter ( Phenotype string )
                  returns table ( Symbol string primary key, ChrLoc string, Disease string );"""
            )
        )
        engine = make_engine(fixture_index, embedder, fixture_fetcher, kb=kb)
        run = engine.run_auto(EXAMPLE_QUERY)
        assert run.state == "done", run.error
        kb_steps = [
            s for s in run.steps if s.stage == "table_extracted" and "kb_process" in s.payload
        ]
        assert kb_steps and kb_steps[0].payload["kb_process"] == "MikdbStored"
        # no link discovery happened for the kb-backed source
        mikdb_link_steps = [
            s
            for s in run.steps
            if s.stage in ("links_filtered", "link_chosen")
            and MIKDB_BASE in str(s.payload.get("source", ""))
        ]
        assert mikdb_link_steps == []

    def test_no_candidates_fails_typed(self, embedder, fixture_fetcher):
        engine = make_engine(build_index([], embedder), embedder, fixture_fetcher)
        run = engine.run_auto('find "zzz qqq" data')
        assert run.state == "failed"
        assert run.error["code"] == "no_candidates"

    def test_decoy_only_candidates_fail(self, engine):
        run = engine.run_auto('find "zebrafish liver" metabolome atlas data')
        assert run.state == "failed"
        assert run.error["code"] == "no_candidates"

    def test_induced_process_stored(self, engine):
        run = engine.run_auto(EXAMPLE_QUERY)
        assert run.state == "done"
        assert engine.kb.names()  # induced descriptions for the wrapped sources
        stored = [engine.kb.get(n) for n in engine.kb.names()]
        assert any(UNIPROT_BASE in pd.url for pd in stored)

    def test_replayability(self, engine):
        first = engine.run_auto(EXAMPLE_QUERY)
        second = engine.run_auto(EXAMPLE_QUERY)
        assert first.result.render_delimited() == second.result.render_delimited()


class TestGuidedRun:
    def test_scripted_auto_equivalence(self, fixture_index, embedder, fixture_fetcher):
        auto_engine = make_engine(fixture_index, embedder, fixture_fetcher)
        auto = auto_engine.run_auto(EXAMPLE_QUERY)
        auto_choices = [c.selected for c in auto.choices]
        guided = auto_engine.run_guided(EXAMPLE_QUERY, scripted_choices=auto_choices)
        assert guided.state == "done", guided.error
        assert (
            guided.result.render_delimited() == auto.result.render_delimited()
        )

    def test_interactive_single_source_path(self, engine):
        run = engine.submit(EXAMPLE_QUERY, mode="guided")
        choice = engine.wait_for_choice(run.id, timeout=30)
        assert choice.choice_kind == "source"
        assert choice.multi
        assert 1 <= len(choice.options) <= 4
        # pick source #2 only
        engine.submit_choice(run.id, choice.options[1].id)
        link_choice = engine.wait_for_choice(run.id, timeout=30)
        assert link_choice.choice_kind == "link"
        assert not link_choice.multi
        engine.submit_choice(run.id, link_choice.options[0].id)
        done = engine.wait(run.id, timeout=60)
        assert done.state == "done", done.error
        # single-source plan: no join columns recorded
        executed = [s for s in done.steps if s.stage == "plan_executed"][0]
        assert executed.payload["join_columns"] == []
        assert done.result.n_rows > 0

    def test_choice_validation(self, engine):
        run = engine.submit(EXAMPLE_QUERY, mode="guided")
        engine.wait_for_choice(run.id, timeout=30)
        with pytest.raises(RunStateError):
            engine.submit_choice(run.id, "c9o9")

    def test_double_submit_rejected(self, engine):
        run = engine.submit(EXAMPLE_QUERY, mode="guided")
        choice = engine.wait_for_choice(run.id, timeout=30)
        engine.submit_choice(run.id, [o.id for o in choice.options])
        # immediately after: either executing or next choice pending; a
        # second submit of the consumed choice must be rejected
        with pytest.raises(RunStateError):
            engine.submit_choice(run.id, [choice.options[0].id])

    def test_session_timeout(self, fixture_index, embedder, fixture_fetcher):
        engine = make_engine(
            fixture_index, embedder, fixture_fetcher, guided_timeout=0.3
        )
        run = engine.submit(EXAMPLE_QUERY, mode="guided")
        engine.wait_for_choice(run.id, timeout=30)
        done = engine.wait(run.id, timeout=30)
        assert done.state == "failed"
        assert done.error["code"] == "session_expired"

    def test_fork_rechoice_on_done_run(self, fixture_index, embedder, fixture_fetcher):
        # induced process descriptions would short-circuit the forked
        # run's wrapper stage; keep both runs on the discovery path
        engine = make_engine(
            fixture_index, embedder, fixture_fetcher, store_induced=False
        )
        base = engine.run_auto(EXAMPLE_QUERY)
        assert base.state == "done"
        source_choice = base.choices[0]
        # re-choose at the source point: only the second option this time
        pick = sorted(source_choice.option_ids)[1]
        forked = engine.submit_choice(base.id, pick)
        assert forked.id != base.id
        assert forked.base_run_id == base.id
        link_choice = engine.wait_for_choice(forked.id, timeout=30)
        engine.submit_choice(forked.id, link_choice.options[0].id)
        done = engine.wait(forked.id, timeout=60)
        assert done.state == "done", done.error
        # the prefix stages replay identically up to the fork point
        base_stages = stages_of(base)
        fork_stages = stages_of(done)
        prefix = base_stages[: base_stages.index("resource_chosen") + 1]
        assert fork_stages[: len(prefix)] == prefix
        # a different selection yields a different (single source) table
        assert done.result.render_delimited() != base.result.render_delimited()


class TestFollowups:
    def test_merge_with_csv_source(self, engine):
        base = engine.run_auto(EXAMPLE_QUERY)
        merged_run = engine.followup_postprocess(
            base.id, f"merge with {ANNOT_BASE}/data/h2a_annotations.csv on GeneSymbol"
        )
        done = engine.wait(merged_run.id, timeout=60)
        assert done.state == "done", done.error
        table = done.result
        assert "Tissue" in table.column_names and "ExpressionLevel" in table.column_names
        # base columns all survive
        for col in base.result.column_names:
            assert col in table.column_names
        assert table.n_rows == 2
        symbols = table.column_values("GeneSymbol")
        assert symbols == ["H2AC1", "H2AC11"]

    def test_filter_is_row_subset(self, engine):
        base = engine.run_auto(EXAMPLE_QUERY)
        run = engine.followup_postprocess(base.id, "filter GeneSymbol = 'H2AC1'")
        done = engine.wait(run.id, timeout=60)
        assert done.state == "done", done.error
        assert done.result.n_rows == 1
        assert done.result.column_names == base.result.column_names

    def test_select_projection(self, engine):
        base = engine.run_auto(EXAMPLE_QUERY)
        run = engine.followup_postprocess(base.id, "select GeneSymbol, Length")
        done = engine.wait(run.id, timeout=60)
        assert done.state == "done", done.error
        assert done.result.column_names == ["GeneSymbol", "Length"]

    def test_missing_column_compile_error(self, engine):
        base = engine.run_auto(EXAMPLE_QUERY)
        run = engine.followup_postprocess(base.id, "filter Nonexistent = 'x'")
        done = engine.wait(run.id, timeout=60)
        assert done.state == "failed"
        assert done.error["code"] in ("compile_error", "no_join_path")

    def test_followup_requires_done_run(self, engine):
        run = engine.submit(EXAMPLE_QUERY, mode="guided")
        engine.wait_for_choice(run.id, timeout=30)
        with pytest.raises(RunStateError):
            engine.followup_postprocess(run.id, "select GeneSymbol")


class TestRunStore:
    def test_file_store_survives_restart(self, fixture_index, embedder, fixture_fetcher, tmp_path):
        store_dir = tmp_path / "runs"
        engine = make_engine(fixture_index, embedder, fixture_fetcher)
        engine.store = FileRunStore(store_dir)
        run = engine.run_auto(EXAMPLE_QUERY)
        assert run.state == "done"
        reloaded = FileRunStore(store_dir)
        snapshot = reloaded.get(run.id)
        assert snapshot is not None
        assert snapshot["state"] == "done"
        assert snapshot["result"]["rows"]

    def test_concurrent_step_reads_are_consistent(self, engine):
        run = engine.submit(EXAMPLE_QUERY, mode="auto")
        seen: list[int] = []
        stop = threading.Event()

        def poll():
            while not stop.is_set():
                steps = engine.steps_snapshot(run.id)
                seen.append(len(steps))
                time.sleep(0.005)

        poller = threading.Thread(target=poll)
        poller.start()
        engine.wait(run.id, timeout=60)
        stop.set()
        poller.join()
        assert seen == sorted(seen)  # append-only prefix views
