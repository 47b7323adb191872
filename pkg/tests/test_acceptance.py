"""Acceptance suite: every exit criterion at its stated tolerance.

Each test prints one verdict line (run with ``pytest -s`` to see them all).
Simulation criteria run the bundled scenarios at fixed seeds with common
random numbers between variants, so per-seed comparisons are exact.
"""

import dataclasses
import math
import statistics

import numpy as np
import pytest
import yaml

from miakit import discovery, flows, synth
from miakit.cli import main
from miakit.discovery import indirect_key, ncc, retry_key
from miakit.flows import bin_activity
from miakit.kernel import Distribution, run_replications
from miakit.metrics import aggregate
from miakit.mission import compute_utilization
from miakit.scenario import bundled_path, load_scenario
from miakit.threat import DefenderSpec, StartPolicy


def verdict(name: str, ok: bool, detail: str = "") -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


def _with_attacker(scenario, **changes):
    return dataclasses.replace(
        scenario, attacker=dataclasses.replace(scenario.attacker, **changes)
    )


def _ci95(values):
    from scipy import stats

    m = statistics.mean(values)
    s = statistics.stdev(values)
    h = float(stats.t.ppf(0.975, len(values) - 1)) * s / math.sqrt(len(values))
    return m, h


class TestCriterion1SlackAbsorbsSlowdown:
    def test_fifty_percent_degrade_has_zero_impact(self):
        scenario = load_scenario(bundled_path("slack.yaml"))
        util = compute_utilization(scenario.mission)["planner"]
        assert abs(util - 0.45) < 1e-3
        n = scenario.replications
        attack = run_replications(scenario, n, scenario.base_seed)
        base = run_replications(scenario.without_attack(), n, scenario.base_seed)
        diffs = [b.plans_completed - a.plans_completed for a, b in zip(attack, base)]
        verdict(
            "1 slack-absorbs-slowdown",
            all(d == 0 for d in diffs),
            f"utilization={util:.3f}, per-seed reduction always 0 over {n} replications",
        )


class TestCriterion2OutageDurationThreshold:
    def test_sweep_monotone_with_single_flag_crossing(self):
        scenario = load_scenario(bundled_path("outage_sweep.yaml"))
        n = scenario.replications
        durations = [1800, 3600, 7200, 10800, 14400, 18000, 21600, 25200]
        base = run_replications(scenario.without_attack(), n, scenario.base_seed)
        base_counts = [m.plans_completed for m in base]

        per_seed = []
        for d in durations:
            variant = dataclasses.replace(
                scenario,
                defender=dataclasses.replace(
                    scenario.defender, detect_delay=Distribution.fixed(d)
                ),
            )
            att = run_replications(variant, n, scenario.base_seed)
            per_seed.append([b - a.plans_completed for a, b in zip(att, base_counts)])

        seed_monotone = all(
            all(nxt[k] >= cur[k] for k in range(n))
            for cur, nxt in zip(per_seed, per_seed[1:])
        )
        base_mean = statistics.mean(base_counts)
        reductions = [statistics.mean(ps) / base_mean for ps in per_seed]
        mean_monotone = all(b >= a for a, b in zip(reductions, reductions[1:]))
        flags = [r >= 0.10 for r in reductions]
        one_crossing = (
            flags == sorted(flags) and any(flags) and not all(flags)
        )
        below = not flags[flags.index(True) - 1] if one_crossing else False
        pretty = ", ".join(f"{d}s:{r * 100:.1f}%" for d, r in zip(durations, reductions))
        verdict(
            "2 outage-duration-threshold",
            seed_monotone and mean_monotone and one_crossing and below,
            pretty,
        )


class TestCriterion3ConsistencyCheckWindow:
    BEFORE_DEFENDER = DefenderSpec(
        detect_delay=Distribution.fixed(1800),
        forensics_duration=Distribution.fixed(600),
        per_host_discovery_prob=1.0,
        remediation_per_host=Distribution.fixed(300),
    )

    def test_before_checkpoint_attack_never_corrupts(self):
        scenario = load_scenario(bundled_path("checkpoint.yaml"))
        before = dataclasses.replace(
            _with_attacker(scenario, start=StartPolicy.fixed(28800)),
            defender=self.BEFORE_DEFENDER,
        )
        n = scenario.replications
        results = run_replications(before, n, scenario.base_seed)
        ok = all(m.corrupted_fraction == 0.0 for m in results)
        verdict("3a before-last-checkpoint", ok, f"corrupted_fraction 0 in all {n} replications")

    def test_after_checkpoint_attack_corrupts_everything_it_touches(self):
        scenario = load_scenario(bundled_path("checkpoint.yaml"))
        n = scenario.replications
        results = run_replications(scenario, n, scenario.base_seed)
        all_positive = all(m.corrupted_fraction > 0.0 for m in results)

        restricted_ok = True
        for k in range(n):
            _, result, timeline, _ = scenario.run_detailed(k, scenario.base_seed)
            onset = timeline.first("effect_onset").time
            touched = [
                i
                for i in result.items
                if i.completed_at is not None and i.completed_at > onset
                and i.outcome in ("completed_clean", "completed_corrupted")
            ]
            if not touched or any(i.outcome != "completed_corrupted" for i in touched):
                restricted_ok = False
                break
        verdict(
            "3b after-last-checkpoint",
            all_positive and restricted_ok,
            "corrupted_fraction > 0 everywhere; fraction on items processed after onset = 1.0",
        )

    def test_proficiency_agility_sweep_is_monotone_per_seed(self):
        scenario = load_scenario(bundled_path("checkpoint.yaml"))
        slow_scan = _with_attacker(scenario, scan_interval=Distribution.fixed(1800))
        n = scenario.replications
        sweep = [(0.005, 1.0), (0.05, 1.0), (0.25, 1.0), (1.0, 1.0), (1.0, 0.5)]
        fractions = []
        for prof, agility in sweep:
            variant = _with_attacker(slow_scan, proficiency=prof, agility=agility)
            ms = run_replications(variant, n, scenario.base_seed)
            fractions.append([m.corrupted_fraction for m in ms])
        monotone = all(
            all(nxt[k] >= cur[k] - 1e-12 for k in range(n))
            for cur, nxt in zip(fractions, fractions[1:])
        )
        span = (statistics.mean(fractions[0]), statistics.mean(fractions[-1]))
        verdict(
            "3c proficiency-agility-sweep",
            monotone and span[0] < 0.10 < span[1],
            f"mean corrupted_fraction spans {span[0]:.3f} -> {span[1]:.3f}, monotone per seed",
        )


class TestCriterion4TimingBeatsRandomness:
    def test_process_triggered_dominates_random_start(self):
        scenario = load_scenario(bundled_path("timing.yaml"))
        n = scenario.replications
        base = run_replications(scenario.without_attack(), n, scenario.base_seed)
        triggered = run_replications(scenario, n, scenario.base_seed)
        random_start = run_replications(
            _with_attacker(scenario, start=StartPolicy.random(82800)),
            n,
            scenario.base_seed,
        )
        t_impact = [b.plans_completed - a.plans_completed for a, b in zip(triggered, base)]
        r_impact = [b.plans_completed - a.plans_completed for a, b in zip(random_start, base)]
        tm, th = _ci95(t_impact)
        rm, rh = _ci95(r_impact)
        ok = tm >= rm and (tm - th) > (rm + rh)
        verdict(
            "4 timing-beats-randomness",
            ok,
            f"triggered {tm:.2f}+/-{th:.2f} vs random {rm:.2f}+/-{rh:.2f} plans lost",
        )


class TestCriterion5StaticOverApproximation:
    def test_static_impact_versus_timed_simulation(self, tmp_path):
        # Static propagation on the bundled fixture says the planning task is
        # impacted by a plandb compromise ...
        out = str(tmp_path / "impact.yaml")
        rc = main([
            "propagate",
            "--graph", bundled_path("checkpoint.yaml"),
            "--compromised", "plandb",
            "--mission", bundled_path("checkpoint.yaml"),
            "--out", out,
        ])
        assert rc == 0
        doc = yaml.safe_load(open(out))
        static_impacted = doc["tasks"]["draft"]["impacted"]

        # ... while the before-checkpoint simulation of the same fixture shows
        # zero mission-level impact at the same seeds.
        scenario = load_scenario(bundled_path("checkpoint.yaml"))
        before = dataclasses.replace(
            _with_attacker(scenario, start=StartPolicy.fixed(28800)),
            defender=TestCriterion3ConsistencyCheckWindow.BEFORE_DEFENDER,
        )
        n = scenario.replications
        att = run_replications(before, n, scenario.base_seed)
        base = run_replications(scenario.without_attack(), n, scenario.base_seed)
        no_reduction = all(
            a.plans_completed == b.plans_completed for a, b in zip(att, base)
        )
        no_corruption = all(m.corrupted_fraction == 0.0 for m in att)

        # Over-approximation also holds the other way around: every task the
        # simulation actually blocked or tainted must be flagged statically.
        from miakit.infrastructure import propagate_static_impact

        outage = load_scenario(bundled_path("outage_sweep.yaml"))
        _, result, timeline, _ = outage.run_detailed(0, outage.base_seed)
        affected = {t for t, s in result.blocked_time.items() if s > 0}
        static = propagate_static_impact(
            outage.build_graph(), {outage.attacker.target}, outage.mission_bindings()
        )
        covered = affected <= set(static.impacted_tasks()) and affected

        verdict(
            "5 static-over-approximation",
            static_impacted and no_reduction and no_corruption and bool(covered),
            "propagate flags the task; timed simulation shows zero impact",
        )


class TestCriterion6NccOracle:
    def test_thousand_random_pairs_match_reference(self):
        from tests.test_discovery import naive_ncc, series

        rng = np.random.default_rng(160_000)
        checked = 0
        worst = 0.0
        while checked < 1000:
            n = int(rng.integers(16, 1025))
            lag = int(rng.integers(0, 33))
            x = rng.poisson(3.0, size=n).astype(float)
            y = rng.poisson(3.0, size=n).astype(float)
            m = min(n, n - lag)
            if m < 2 or x[:m].std() == 0 or y[lag:].std() == 0:
                continue
            got = ncc(series(x), series(y), lag)
            want = naive_ncc(list(x), list(y), lag)
            worst = max(worst, abs(got - want))
            checked += 1
        identities = []
        xs = [1, 4, 2, 8, 5, 7, 3, 6]
        identities.append(abs(ncc(series(xs), series(xs), 0) - 1.0))
        identities.append(abs(ncc(series(xs), series([9 - v for v in xs]), 0) + 1.0))
        shifted = [0, 0, 0] + xs
        identities.append(abs(ncc(series(xs), series(shifted), 3) - 1.0))
        base = ncc(series(xs), series([5, 1, 4, 4, 8, 2, 6, 7]), 1)
        affine = ncc(series([3.5 * v + 11 for v in xs]), series([5, 1, 4, 4, 8, 2, 6, 7]), 1)
        identities.append(abs(base - affine))
        verdict(
            "6 ncc-oracle-equivalence",
            worst < 1e-9 and all(e < 1e-9 for e in identities),
            f"1000 pairs, worst deviation {worst:.2e}",
        )


def _run_discovery(records):
    direct = discovery.direct_dependencies(records)
    t0 = min(r.ts_us for r in records)
    t1 = max(r.ts_us for r in records) + 1
    cache = {}

    def series_for(channel):
        if channel not in cache:
            cache[channel] = bin_activity(records, channel, 1.0, (t0, t1))
        return cache[channel]

    return discovery.infer_indirect(direct, series_for)


class TestCriterion7DiscoveryRecallPrecision:
    def test_noiseless_cascades_recovered_exactly(self):
        topology = synth.load_topology(bundled_path("cascade_clean.yaml"))
        perfect = True
        for seed in range(20):
            records, truth = synth.gen_flows(topology, seed=seed)
            found = {indirect_key(i) for i in _run_discovery(records)}
            report = discovery.evaluate(found, synth.truth_indirect_keys(truth))
            if not (report.precision == 1.0 and report.recall == 1.0):
                perfect = False
        verdict("7a noiseless-discovery", perfect, "precision=recall=1.0 on 20 seeds")

    def test_noisy_cascades_stay_above_point_nine(self):
        topology = synth.load_topology(bundled_path("cascade_noisy.yaml"))
        tp = fp = fn = 0
        for seed in range(20):
            records, truth = synth.gen_flows(topology, seed=seed)
            found = {indirect_key(i) for i in _run_discovery(records)}
            want = synth.truth_indirect_keys(truth)
            tp += len(found & want)
            fp += len(found - want)
            fn += len(want - found)
        recall = tp / (tp + fn)
        precision = tp / (tp + fp) if tp + fp else 1.0
        verdict(
            "7b noisy-discovery",
            recall >= 0.9 and precision >= 0.9,
            f"recall={recall:.3f} precision={precision:.3f} with 20% drop + jitter",
        )

    def test_null_model_false_positive_rate(self):
        topology = synth.load_topology(bundled_path("null_pivot.yaml"))
        trials_with_emission = 0
        for seed in range(200):
            records, _ = synth.gen_flows(topology, seed=seed)
            if _run_discovery(records):
                trials_with_emission += 1
        rate = trials_with_emission / 200
        verdict("7c null-model", rate <= 0.01, f"emission rate {rate * 100:.1f}% over 200 trials")


class TestCriterion8RetryChainFixture:
    def test_three_planted_chains_with_correct_fallback(self):
        topology = synth.load_topology(bundled_path("retry_fixture.yaml"))
        records, truth = synth.gen_flows(topology, seed=8)
        chains = discovery.detect_retry_chains(records)
        found = {retry_key(c) for c in chains}
        ok = len(chains) == 3 and found == synth.truth_retry_keys(truth)
        ok = ok and all(c.fallback.label() == "comm-b:2404/tcp" for c in chains)
        verdict(
            "8 retry-chain-fixture",
            ok,
            "exactly the three planted chains, fallback comm-b:2404/tcp",
        )


class TestCriterion9DeterminismAndStatistics:
    def test_identical_seed_byte_identical_csv(self, tmp_path):
        outs = []
        for k in (1, 2):
            out = tmp_path / f"run{k}.csv"
            rc = main([
                "simulate",
                "--scenario", bundled_path("baseline.yaml"),
                "--replications", "50",
                "--seed", "5",
                "--out", str(out),
            ])
            assert rc == 0
            outs.append(out.read_bytes())
        verdict("9a determinism", outs[0] == outs[1], "same seed, byte-identical metrics CSV")

    def test_ci_halfwidth_scales_with_replications(self):
        scenario = load_scenario(bundled_path("baseline.yaml"))
        results = run_replications(scenario, 200, scenario.base_seed)
        hw50 = aggregate(results[:50])["plans_completed"].ci_halfwidth
        hw200 = aggregate(results)["plans_completed"].ci_halfwidth
        ratio = hw50 / hw200
        verdict(
            "9b ci-scaling",
            abs(ratio - 2.0) <= 0.3,
            f"half-width ratio n=50 vs n=200 is {ratio:.3f}",
        )
