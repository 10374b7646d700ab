"""Benchmark harness tests: scenario builds, episode suites, report math."""

import copy
import math

import numpy as np
import pytest
import yaml

from semnav.bench import (
    BenchmarkReport,
    EpisodeResult,
    ScenarioSummary,
    build_scenario_map,
    run_benchmark,
    run_scenario,
)
from semnav.config import RunConfig
from semnav.errors import DataError
from semnav.navigation import Attempt, NavigationEpisode
from semnav.sim import load_scenario


def room_scenario(name, seed, tables, items, relocations, queries, extra=None):
    walls = [[0, 0, 9, 0], [9, 0, 9, 5], [9, 5, 0, 5], [0, 5, 0, 0]]
    spec = {
        "name": name,
        "seed": seed,
        "vocabulary": {
            "classes": ["table", "cup"],
            "seed": 11,
            "dim": 32,
            "static_classes": ["table"],
        },
        "world": {
            "walls": walls,
            "furniture": [
                {"id": tid, "class": "table", "rect": rect, "top": 0.7}
                for tid, rect in tables
            ],
            "items": [
                {"id": iid, "class": "cup", "carrier": carrier, "offset": offset}
                for iid, carrier, offset in items
            ],
        },
        "agent": {"start": [1.0, 2.5], "range": 4.0, "step": 0.25},
        "tour": [[8.0, 1.0], [8.0, 4.0], [1.0, 4.0], [1.0, 2.5]],
        "relocations": relocations,
        "queries": queries,
    }
    if extra:
        spec.update(extra)
    return spec


FOUR_TABLES = [
    (0, [7.5, 2.5, 1.2, 0.8]),
    (1, [4.5, 1.2, 1.2, 0.8]),
    (2, [4.5, 3.8, 1.2, 0.8]),
    (3, [2.0, 1.2, 1.2, 0.8]),
]


def cross_anchor_scenario(name="cross", seed=4):
    # vocab seed 11: cup 0's plain cosine against the table instances ranks
    # table 1 last, so a stale three-attempt budget never reaches it
    return room_scenario(
        name,
        seed,
        FOUR_TABLES,
        items=[(0, 0, [0.2, 0.0])],
        relocations=[
            {"time": 100, "item": 0, "carrier": 1, "offset": [0.0, 0.0], "kind": "cross_anchor"}
        ],
        queries=[{"item": 0}],
    )


def static_scenario(name="static", seed=2):
    return room_scenario(
        name,
        seed,
        FOUR_TABLES,
        items=[
            (0, 0, [0.3, 0.2]),
            (1, 1, [0.0, 0.0]),
            (2, 2, [-0.3, 0.2]),
            (3, 3, [0.2, -0.2]),
            (4, 0, [-0.3, -0.2]),
        ],
        relocations=[],
        queries=[{"item": i} for i in range(5)],
    )


def single_anchor_scenario(name="lone", seed=6):
    return room_scenario(
        name,
        seed,
        tables=[(0, [4.5, 2.5, 1.2, 0.8])],
        items=[(0, 0, [0.2, 0.0])],
        relocations=[],
        queries=[{"item": 0}],
    )


def in_anchor_scenario(name="nudge", seed=8):
    return room_scenario(
        name,
        seed,
        tables=[(0, [4.5, 2.5, 2.0, 1.2])],
        items=[(0, 0, [-0.8, -0.4])],
        relocations=[
            {"time": 100, "item": 0, "carrier": 0, "offset": [0.8, 0.4], "kind": "in_anchor"}
        ],
        queries=[{"item": 0}],
    )


def anchor_at(amap, xy):
    for aid, anchor in amap.anchors.items():
        res = anchor.footprint.resolution
        cell = (math.floor(xy[0] / res), math.floor(xy[1] / res))
        if cell in anchor.footprint.cells:
            return aid
    raise AssertionError(f"no anchor footprint covers {xy}")


class TestBuildScenarioMap:
    def test_noise_free_build_recovers_world(self):
        config = RunConfig(dim=32)
        built = build_scenario_map(load_scenario(cross_anchor_scenario()), config)
        assert built.gt_objects_seen == 5
        assert len(built.cmap.objects) == 5
        assert len(built.amap.anchors) == 4
        start_anchor = anchor_at(built.amap, (7.5, 2.5))
        assert len(built.amap.anchors[start_anchor].volatile_features) == 1
        assert built.stats.frames == built.next_tick
        assert built.stats.frames > 50

    def test_odr_is_exactly_one_noise_free(self):
        config = RunConfig(dim=32)
        summary, _ = run_scenario(load_scenario(static_scenario()), config)
        assert summary.map_objects == summary.gt_objects_seen == 9
        assert summary.odr == 1.0


class TestEpisodeSuites:
    def test_static_updated_success_rate_is_one(self):
        config = RunConfig(dim=32)
        report = run_benchmark([static_scenario()], config, strategies=("updated",))
        assert report.success_rate("updated") == 1.0
        assert report.kinds() == ["static"]
        assert len(report.results) == 5
        for row in report.results:
            assert row.succeeded
            assert row.failure is None
            assert len(row.episode.attempts) == 1

    def test_cross_anchor_updated_beats_stale(self):
        config = RunConfig(dim=32)
        report = run_benchmark([cross_anchor_scenario()], config)
        assert report.success_rate("updated") == 1.0
        assert report.success_rate("stale") == 0.0
        assert 0.0 <= report.success_rate("random") <= 1.0
        updated_row = next(r for r in report.results if r.strategy == "updated")
        stale_row = next(r for r in report.results if r.strategy == "stale")
        assert updated_row.kind == "cross_anchor"
        assert len(updated_row.episode.attempts) == 2
        assert updated_row.episode.attempts[0].outcome == "no_match"
        assert updated_row.episode.attempts[1].outcome == "matched"
        assert stale_row.episode.status == "exhausted"
        assert len(stale_row.episode.attempts) == 3
        assert stale_row.failure == "attempt_limit"

    def test_single_anchor_world_equalizes_strategies(self):
        config = RunConfig(dim=32)
        report = run_benchmark([single_anchor_scenario()], config)
        rates = {s: report.success_rate(s) for s in report.strategies}
        assert rates == {"updated": 1.0, "stale": 1.0, "random": 1.0}
        first_anchors = {
            r.strategy: r.episode.attempts[0].anchor_id for r in report.results
        }
        assert len(set(first_anchors.values())) == 1

    def test_in_anchor_relocation_keeps_first_anchor_choice(self):
        config = RunConfig(dim=32)
        scenario = load_scenario(in_anchor_scenario())
        built = build_scenario_map(scenario, config)
        host = anchor_at(built.amap, (4.5, 2.5))
        report = run_benchmark(
            [in_anchor_scenario()], config, strategies=("updated", "stale")
        )
        for row in report.results:
            assert row.kind == "in_anchor"
            assert row.episode.attempts[0].anchor_id == host
            assert row.succeeded
        assert report.success_rate("updated", "in_anchor") == 1.0
        assert report.success_rate("stale", "in_anchor") == 1.0

    def test_seed_derivation(self):
        config = RunConfig(dim=32)
        report = run_benchmark([static_scenario(seed=2)], config, strategies=("updated", "stale"))
        for row in report.results:
            qi = row.item_id  # queries listed in item order
            si = ("updated", "stale").index(row.strategy)
            assert row.episode.seed == 2 * 100_000 + qi * 100 + si

    def test_query_text_defaults_to_scenario_item(self):
        config = RunConfig(dim=32)
        report = run_benchmark([single_anchor_scenario(name="lone")], config, strategies=("stale",))
        assert report.results[0].query_text == "lone/item-0"

    def test_run_scenario_applies_relocations(self):
        config = RunConfig(dim=32)
        scenario = load_scenario(cross_anchor_scenario())
        run_scenario(scenario, config, strategies=("stale",))
        assert scenario.world.items[0].carrier == 1


class TestBenchmarkPlumbing:
    def test_unknown_strategy_rejected(self):
        with pytest.raises(DataError):
            run_benchmark([single_anchor_scenario()], RunConfig(dim=32), strategies=("psychic",))

    def test_scenarios_sorted_by_name(self):
        config = RunConfig(dim=32)
        report = run_benchmark(
            [single_anchor_scenario(name="zeta"), single_anchor_scenario(name="alpha")],
            config,
            strategies=("stale",),
        )
        assert [s.name for s in report.scenarios] == ["alpha", "zeta"]

    def test_accepts_yaml_paths(self, tmp_path):
        path = tmp_path / "lone.yaml"
        path.write_text(yaml.safe_dump(single_anchor_scenario()))
        report = run_benchmark([path], RunConfig(dim=32), strategies=("stale",))
        assert report.success_rate("stale") == 1.0

    def test_report_deterministic_across_runs(self):
        config = RunConfig(dim=32)
        a = run_benchmark([cross_anchor_scenario()], config, strategies=("updated", "random"))
        b = run_benchmark([cross_anchor_scenario()], config, strategies=("updated", "random"))
        assert a.to_json() == b.to_json()


def fake_result(strategy, succeeded, failure, kind="static", attempts=1, scenario="s"):
    episode = NavigationEpisode(
        query_text="q",
        strategy=strategy,
        attempt_limit=3,
        pinned_score=0.9,
        attempts=tuple(
            Attempt(anchor_id=i, score=0.5, outcome="no_match") for i in range(attempts)
        ),
        status="success" if succeeded else "exhausted",
        final_position=(0.0, 0.0),
        claimed_position=None,
        seed=0,
    )
    return EpisodeResult(
        scenario=scenario,
        query_text="q",
        item_id=0,
        kind=kind,
        strategy=strategy,
        gt_position=(0.0, 0.0),
        succeeded=succeeded,
        failure=failure,
        episode=episode,
    )


class TestReportMath:
    def make_report(self):
        rows = [
            fake_result("updated", True, None),
            fake_result("updated", False, "attempt_limit", attempts=3),
            fake_result("stale", False, "planning", kind="cross_anchor"),
            fake_result("stale", False, "false_match", kind="cross_anchor", attempts=2),
        ]
        summary = ScenarioSummary(
            name="s", frames=10, observations=20, map_objects=3,
            anchors=2, gt_objects_seen=3, odr=1.0,
        )
        return BenchmarkReport(scenarios=[summary], results=rows, strategies=("updated", "stale"))

    def test_success_rates(self):
        report = self.make_report()
        assert report.success_rate("updated") == 0.5
        assert report.success_rate("stale") == 0.0
        assert report.success_rate("stale", "cross_anchor") == 0.0
        with pytest.raises(DataError):
            report.success_rate("updated", "cross_anchor")
        with pytest.raises(DataError):
            report.success_rate("random")

    def test_histogram_and_failures(self):
        report = self.make_report()
        assert report.attempt_histogram("updated") == {1: 1, 3: 1}
        assert report.failure_counts("stale") == {
            "false_match": 1, "planning": 1, "attempt_limit": 0,
        }
        assert report.kinds() == ["cross_anchor", "static"]

    def test_to_dict_and_text(self):
        report = self.make_report()
        d = report.to_dict()
        assert d["success_rate"] == {"updated": 0.5, "stale": 0.0}
        assert d["success_rate_by_kind"]["updated"] == {"static": 0.5}
        assert len(d["episodes"]) == 4
        text = report.format_text()
        assert "success rate by strategy" in text
        assert "updated: overall=0.500" in text
