"""Episode runner, ineffective-decision counting, aggregation, reports."""

import math

import pytest

from cotdrive.agents import make_agent
from cotdrive.cot import BackendError
from cotdrive.harness import (Decision, EpisodeResult, MetricsSummary,
                              aggregate, count_ineffective, emit_report,
                              results_to_jsonl, run_episode, run_suite)
from cotdrive.scenario import MetaAction, default_config


def dec(action, min_ttc=math.inf, t=0.0):
    return Decision(sim_time=t, action=action, fallback_used=False,
                    min_ttc=min_ttc)


class TestRunEpisode:
    def test_empty_highway_succeeds(self):
        cfg = default_config("highway", n_background=0)
        result = run_episode(cfg, make_agent("cot-scripted"), seed=0)
        assert result.outcome == "success"
        assert result.scenario == "highway"
        assert result.seed == 0
        assert result.decisions
        # decisions come at 1 Hz of simulation time
        assert result.decisions[1].sim_time - result.decisions[0].sim_time \
            == pytest.approx(1.0)

    def test_timid_agent_times_out(self):
        class Timid:
            name = "timid"

            def decide(self, scene, world):
                action = (MetaAction.SLOWER if world.ego_target_speed > 0
                          else MetaAction.IDLE)
                return action, False

        cfg = default_config("highway", n_background=0, max_sim_time=10.0)
        result = run_episode(cfg, Timid(), seed=0)
        assert result.outcome == "timeout"
        assert result.sim_time_elapsed == pytest.approx(10.0, abs=0.1)

    def test_backend_failure_becomes_agent_error(self):
        class Broken:
            name = "broken"

            def decide(self, scene, world):
                raise BackendError("backend down")

        cfg = default_config("highway", n_background=0, max_sim_time=5.0)
        result = run_episode(cfg, Broken(), seed=0)
        assert result.outcome == "agent_error"
        assert result.decisions == ()

    def test_deterministic(self):
        cfg = default_config("intersection", max_sim_time=8.0)
        a = run_episode(cfg, make_agent("cot-scripted"), seed=3)
        b = run_episode(cfg, make_agent("cot-scripted"), seed=3)
        assert results_to_jsonl([a]) == results_to_jsonl([b])

    def test_suite_uses_consecutive_seeds(self):
        cfg = default_config("highway", n_background=0, max_sim_time=3.0)
        results = run_suite(cfg, make_agent("greedy"), base_seed=10, episodes=3)
        assert [r.seed for r in results] == [10, 11, 12]


class TestCountIneffective:
    def test_speed_reversal_with_safe_ttc_counts(self):
        ds = [dec(MetaAction.FASTER), dec(MetaAction.SLOWER, min_ttc=10.0)]
        assert count_ineffective(ds) == 1

    def test_speed_reversal_as_reaction_exempt(self):
        ds = [dec(MetaAction.FASTER), dec(MetaAction.SLOWER, min_ttc=2.0)]
        assert count_ineffective(ds) == 0

    def test_reversal_outside_window_not_counted(self):
        ds = [dec(MetaAction.FASTER), dec(MetaAction.IDLE), dec(MetaAction.IDLE),
              dec(MetaAction.SLOWER, min_ttc=10.0)]
        assert count_ineffective(ds) == 0

    def test_lane_change_reversal_counts(self):
        ds = [dec(MetaAction.LANE_LEFT), dec(MetaAction.IDLE),
              dec(MetaAction.LANE_RIGHT)]
        assert count_ineffective(ds) == 1

    def test_lane_change_reversal_window_is_three(self):
        ds = [dec(MetaAction.LANE_LEFT), dec(MetaAction.IDLE),
              dec(MetaAction.IDLE), dec(MetaAction.IDLE),
              dec(MetaAction.LANE_RIGHT)]
        assert count_ineffective(ds) == 0

    def test_each_pair_counts_once(self):
        ds = [dec(MetaAction.FASTER), dec(MetaAction.SLOWER, min_ttc=10.0),
              dec(MetaAction.FASTER, min_ttc=10.0),
              dec(MetaAction.SLOWER, min_ttc=10.0)]
        assert count_ineffective(ds) == 2

    def test_idle_never_counts(self):
        ds = [dec(MetaAction.IDLE)] * 5
        assert count_ineffective(ds) == 0


class TestAggregate:
    def make_result(self, outcome, decisions=(), elapsed=10.0):
        return EpisodeResult(scenario="highway", seed=0, outcome=outcome,
                             decisions=tuple(decisions), sim_time_elapsed=elapsed)

    def test_counts_and_averages(self):
        ok = self.make_result("success",
                              [dec(MetaAction.FASTER), dec(MetaAction.IDLE)],
                              elapsed=8.0)
        crash = self.make_result(
            "collision",
            [dec(MetaAction.FASTER), dec(MetaAction.SLOWER, min_ttc=10.0)],
            elapsed=4.0)
        out = self.make_result("timeout", [dec(MetaAction.IDLE)] * 21,
                               elapsed=30.0)
        late = self.make_result("success", [dec(MetaAction.IDLE)], elapsed=12.0)
        s = aggregate([ok, crash, out, late])
        assert s.fail_pct == pytest.approx(50.0)
        # 1 ineffective pair over 26 decisions
        assert s.inefficiency_pct == pytest.approx(100.0 / 26.0)
        assert s.avg_time_s == pytest.approx(10.0)
        assert s.episodes == 4
        assert dict(s.outcome_counts) == {"success": 2, "collision": 1,
                                          "timeout": 1}

    def test_no_successes_gives_nan_time(self):
        s = aggregate([self.make_result("timeout")])
        assert s.fail_pct == 100.0
        assert math.isnan(s.avg_time_s)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([])


class TestEmitReport:
    def summary(self, fail=4.0, ineff=6.0, avg=3.95):
        return MetricsSummary(fail_pct=fail, inefficiency_pct=ineff,
                              avg_time_s=avg, episodes=50,
                              outcome_counts=(("success", 48),))

    def test_single_row_formatting(self):
        csv, md = emit_report({("intersection", "mpc"): self.summary()})
        assert csv == ("scenario,method,fail_pct,inefficiency_pct,avg_time_s\n"
                       "intersection,mpc,4.0,6.0,4.0\n")
        assert "| intersection | mpc | 4.0% | 6.0% | 4.0 s |" in md

    def test_rows_in_scenario_major_method_order(self):
        summaries = {}
        for scenario in ("merge", "highway", "intersection", "roundabout"):
            for method in ("cot-scripted", "greedy", "mpc"):
                summaries[(scenario, method)] = self.summary()
        csv, _ = emit_report(summaries)
        rows = [line.split(",")[:2] for line in csv.strip().splitlines()[1:]]
        assert rows == [
            ["intersection", "greedy"], ["intersection", "mpc"],
            ["intersection", "cot-scripted"],
            ["roundabout", "greedy"], ["roundabout", "mpc"],
            ["roundabout", "cot-scripted"],
            ["highway", "greedy"], ["highway", "mpc"],
            ["highway", "cot-scripted"],
            ["merge", "greedy"], ["merge", "mpc"], ["merge", "cot-scripted"],
        ]

    def test_jsonl_one_line_per_episode(self):
        results = [
            EpisodeResult("highway", 0, "success",
                          (dec(MetaAction.FASTER, t=1.0),), 10.0),
            EpisodeResult("highway", 1, "collision", (), 4.0),
        ]
        lines = results_to_jsonl(results).splitlines()
        assert len(lines) == 2
        assert '"seed": 0' in lines[0]
        assert '"FASTER"' in lines[0]
