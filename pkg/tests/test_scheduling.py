import math

import numpy as np
import pytest
from scipy.optimize import minimize

from crowdharvest import scheduling as sched
from crowdharvest.errors import (
    DegenerateModelError,
    InfeasibleDemandError,
    InvalidParameterError,
    ProblemTooLargeError,
)
from crowdharvest.rng import substream
from crowdharvest.swipt import LinkState


def random_problem(seed, max_slots=4):
    rng = substream(seed, "problem")
    k = int(rng.integers(2, max_slots + 1))
    return sched.ScheduleProblem(
        slot_count=k,
        slot_duration_s=1.0,
        source_arrivals_j=tuple(rng.uniform(0.0, 2.0, k)),
        relay_arrivals_j=tuple(rng.uniform(0.0, 2.0, k)),
        source_gains=tuple(rng.uniform(0.2e-3, 2e-3, k)),
        relay_gains=tuple(rng.uniform(0.2e-3, 2e-3, k)),
        noise_power_w=1e-9,
        source_capacity_j=float(rng.choice([2.0, math.inf])),
        relay_capacity_j=float(rng.choice([2.0, math.inf])),
        rx_energy_cost_j=float(rng.choice([0.0, 0.1])),
        delay_constrained=bool(rng.integers(0, 2)),
    )


DESK_MDP = sched.BatteryMdp(
    arrivals=sched.MarkovArrivals((0.0, 2.0), ((0.8, 0.2), (0.2, 0.8))),
    battery_buckets=16,
    bucket_j=1.0,
    spend_levels_j=(0.0, 1.0, 2.0, 3.0, 4.0),
    snr_per_joule=2.0,
)


class TestArrivals:
    def test_bernoulli_certain(self):
        trace = sched.simulate_arrivals(sched.BernoulliArrivals(1.0, 3.0), 100, 1)
        assert np.all(trace == 3.0)

    def test_bernoulli_never(self):
        trace = sched.simulate_arrivals(sched.BernoulliArrivals(0.0, 3.0), 100, 1)
        assert np.all(trace == 0.0)

    def test_tri_state_mean(self):
        trace = sched.simulate_arrivals(sched.TriStateArrivals(2.0), 1_000_000, 2)
        assert set(np.unique(trace)) <= {0.0, 2.0, 4.0}
        assert np.mean(trace) == pytest.approx(2.0, rel=0.01)

    def test_markov_stationary_frequencies(self):
        chain = sched.MarkovArrivals((0.0, 1.0), ((0.9, 0.1), (0.4, 0.6)))
        trace = sched.simulate_arrivals(chain, 1_000_000, 3)
        freq_state1 = np.mean(trace == 1.0)
        assert freq_state1 == pytest.approx(chain.stationary()[1], abs=0.01)

    def test_deterministic_pad_truncate(self):
        proc = sched.DeterministicArrivals((1.0, 2.0, 3.0))
        assert list(sched.simulate_arrivals(proc, 2, 0)) == [1.0, 2.0]
        assert list(sched.simulate_arrivals(proc, 5, 0)) == [1.0, 2.0, 3.0, 0.0, 0.0]

    def test_transition_rows_validated(self):
        with pytest.raises(InvalidParameterError):
            sched.MarkovArrivals((0.0, 1.0), ((0.5, 0.4), (0.5, 0.5)))


class TestOfflineOptimal:
    def test_zero_arrivals_zero_objective(self):
        p = sched.ScheduleProblem(
            3, 1.0, (0.0,) * 3, (0.0,) * 3, (1e-3,) * 3, (1e-3,) * 3, 1e-9
        )
        s = sched.offline_optimal(p, 4)
        assert s.objective_value == 0.0
        assert all(v == 0 for v in s.source_indicators)

    def test_single_slot_cannot_deliver(self):
        p = sched.ScheduleProblem(1, 1.0, (5.0,), (5.0,), (1e-3,), (1e-3,), 1e-9)
        assert sched.offline_optimal(p, 4).objective_value == 0.0

    def test_relay_only_energy_is_useless(self):
        p = sched.ScheduleProblem(
            2, 1.0, (0.0, 0.0), (4.0, 0.0), (1e-3,) * 2, (1e-3,) * 2, 1e-9
        )
        assert sched.offline_optimal(p, 4).objective_value == 0.0

    def test_matches_oracle_on_random_instances(self):
        for seed in range(25):
            p = random_problem(seed)
            dp = sched.offline_optimal(p, 8)
            bf = sched.brute_force_oracle(p, 8)
            assert dp.objective_value == pytest.approx(
                bf.objective_value, rel=1e-3, abs=1e-9
            )
            sched.validate_schedule(p, dp)
            sched.validate_schedule(p, bf)

    def test_monotone_in_single_arrival(self):
        base = random_problem(77)
        before = sched.offline_optimal(base, 6).objective_value
        from dataclasses import replace

        arrivals = list(base.source_arrivals_j)
        arrivals[0] += 1.0
        bumped = replace(base, source_arrivals_j=tuple(arrivals))
        assert sched.offline_optimal(bumped, 6).objective_value >= before - 1e-12

    def test_delay_constraint_never_helps(self):
        from dataclasses import replace

        for seed in range(8):
            p = replace(random_problem(200 + seed), delay_constrained=False)
            free = sched.offline_optimal(p, 6).objective_value
            tight = sched.offline_optimal(replace(p, delay_constrained=True), 6).objective_value
            assert tight <= free + 1e-12

    def test_rx_cost_never_helps(self):
        from dataclasses import replace

        for seed in range(8):
            p = replace(random_problem(300 + seed), rx_energy_cost_j=0.0)
            cheap = sched.offline_optimal(p, 6).objective_value
            costly = sched.offline_optimal(replace(p, rx_energy_cost_j=0.5), 6).objective_value
            assert costly <= cheap + 1e-12

    def test_state_space_guard(self):
        p = sched.ScheduleProblem(
            10, 1.0, (1.0,) * 10, (1.0,) * 10, (1e-3,) * 10, (1e-3,) * 10, 1e-9
        )
        with pytest.raises(ProblemTooLargeError):
            sched.offline_optimal(p, 8, state_bound=10_000)

    def test_oracle_guard(self):
        p = sched.ScheduleProblem(
            8, 1.0, (1.0,) * 8, (1.0,) * 8, (1e-3,) * 8, (1e-3,) * 8, 1e-9
        )
        with pytest.raises(ProblemTooLargeError):
            sched.brute_force_oracle(p, 8, max_schedules=100_000)

    def test_validator_catches_violations(self):
        p = sched.ScheduleProblem(2, 1.0, (1.0, 0.0), (1.0, 0.0), (1e-3,) * 2, (1e-3,) * 2, 1e-9)
        bad = sched.Schedule(
            source_powers_w=(5.0, 0.0),  # spends 5 J with only 1 J harvested
            relay_powers_w=(0.0, 0.0),
            source_indicators=(1, 0),
            relay_indicators=(0, 0),
            bits_per_slot=(0.0, 0.0),
            objective_value=0.0,
        )
        with pytest.raises(InvalidParameterError):
            sched.validate_schedule(p, bad)
        fake_bits = sched.Schedule(
            source_powers_w=(0.0, 0.0),
            relay_powers_w=(0.0, 1.0),
            source_indicators=(0, 0),
            relay_indicators=(0, 1),
            bits_per_slot=(0.0, 5.0),  # forwards bits never received
            objective_value=5.0,
        )
        with pytest.raises(InvalidParameterError):
            sched.validate_schedule(p, fake_bits)


def min_time_oracle(problem, demand, levels):
    """Independent enumeration: fewest relay slots delivering the demand."""
    best = None
    best_bits = 0.0
    n_actions = 2 * levels + 1
    import itertools

    for seq in itertools.product(range(n_actions), repeat=problem.slot_count):
        b_s, b_r, buf, bits, relay_slots = (
            problem.initial_source_j, problem.initial_relay_j, 0.0, 0.0, 0,
        )
        for k, a in enumerate(seq):
            b_s = min(problem.source_capacity_j, b_s + problem.source_arrivals_j[k])
            b_r = min(problem.relay_capacity_j, b_r + problem.relay_arrivals_j[k])
            received = 0.0
            if 1 <= a <= levels:
                spend = (a / levels) * b_s
                b_s -= spend
                if spend > 0 and b_r >= problem.rx_energy_cost_j:
                    b_r -= problem.rx_energy_cost_j
                    received = math.log2(
                        1.0 + spend / problem.slot_duration_s * problem.source_gains[k]
                        / problem.noise_power_w
                    )
            elif a > levels:
                spend = ((a - levels) / levels) * b_r
                b_r -= spend
                if spend > 0:
                    rate = math.log2(
                        1.0 + spend / problem.slot_duration_s * problem.relay_gains[k]
                        / problem.noise_power_w
                    )
                    bits += min(buf, rate)
                    buf -= min(buf, rate)
                    relay_slots += 1
            if problem.delay_constrained:
                buf = received
            else:
                buf += received
        best_bits = max(best_bits, bits)
        if bits >= demand - 1e-9 and (best is None or relay_slots < best):
            best = relay_slots
    return best, best_bits


class TestMinRelayTime:
    def test_zero_demand(self):
        p = random_problem(11)
        s = sched.min_relay_time(p, 0.0, 6)
        assert s.objective_value == 0.0

    def test_demand_at_maximum_matches_offline(self):
        p = random_problem(13)
        max_bits = sched.offline_optimal(p, 6).objective_value
        s = sched.min_relay_time(p, max_bits, 6)
        assert sum(s.bits_per_slot) == pytest.approx(max_bits, rel=1e-9)

    def test_infeasible_reports_max_achievable(self):
        p = random_problem(17)
        max_bits = sched.offline_optimal(p, 6).objective_value
        with pytest.raises(InfeasibleDemandError) as err:
            sched.min_relay_time(p, max_bits * 2 + 1.0, 6)
        assert err.value.max_achievable_bits == pytest.approx(max_bits, rel=1e-9)

    def test_matches_enumeration_oracle(self):
        for seed in range(10):
            p = random_problem(400 + seed, max_slots=3)
            max_bits = sched.offline_optimal(p, 4).objective_value
            if max_bits <= 0:
                continue
            demand = 0.5 * max_bits
            ours = sched.min_relay_time(p, demand, 4)
            oracle_slots, _ = min_time_oracle(p, demand, 4)
            assert ours.objective_value == oracle_slots
            sched.validate_schedule(p, ours)


class TestWaterFilling:
    def test_single_slot_spends_everything(self):
        p = sched.directional_water_fill(np.array([3.0]), np.array([1.0]), 1.0)
        assert p[0] == pytest.approx(3.0)

    def test_early_arrival_spreads_evenly(self):
        p = sched.directional_water_fill(np.array([2.0, 0.0]), np.array([1.0, 1.0]), 1.0)
        assert p == pytest.approx([1.0, 1.0])

    def test_energy_cannot_flow_backwards(self):
        p = sched.directional_water_fill(np.array([0.0, 2.0]), np.array([1.0, 1.0]), 1.0)
        assert p == pytest.approx([0.0, 2.0])

    def test_beats_greedy_on_random_instances(self):
        def throughput(powers, gains, noise):
            return float(np.sum(np.log2(1.0 + powers * gains / noise)))

        for seed in range(100):
            rng = substream(seed, "dwf")
            k = int(rng.integers(2, 8))
            e = rng.uniform(0.0, 2.0, k)
            g = rng.uniform(0.5, 2.0, k)
            powers = sched.directional_water_fill(e, g, 1.0)
            assert throughput(powers, g, 1.0) >= throughput(e, g, 1.0) - 1e-9

    def test_matches_convex_solver(self):
        for seed in range(30):
            rng = substream(seed, "dwf-oracle")
            k = int(rng.integers(2, 9))
            e = rng.uniform(0.1, 2.0, k)
            g = rng.uniform(0.5, 2.0, k)
            capacity = float(rng.choice([2.5, math.inf]))
            ours = sched.directional_water_fill(e, g, 1.0, capacity_j=capacity)

            cum_e = np.cumsum(e)

            def neg_rate(s):
                return -np.sum(np.log2(1.0 + s * g / 1.0))

            cons = [
                {"type": "ineq", "fun": (lambda s, i=i: cum_e[i] - np.sum(s[: i + 1]))}
                for i in range(k)
            ]
            if math.isfinite(capacity):
                cons += [
                    {
                        "type": "ineq",
                        "fun": (
                            lambda s, i=i: np.sum(s[: i + 1]) - (cum_e[i + 1] - capacity)
                        ),
                    }
                    for i in range(k - 1)
                ]
            res = minimize(
                neg_rate, x0=e.copy(), bounds=[(0, None)] * k, constraints=cons,
                method="SLSQP", options={"maxiter": 500, "ftol": 1e-12},
            )
            assert -neg_rate(ours) >= -res.fun - 1e-6

    def test_water_level_kkt_structure(self):
        # between adjacent active slots: equal levels across a slack
        # boundary, a step up where the battery runs empty, a step down
        # where it is full
        for seed, capacity in ((5, math.inf), (6, 2.0), (7, 1.5), (8, math.inf)):
            rng = substream(seed, "kkt")
            e = rng.uniform(0.0, min(capacity, 2.0), 10)
            g = rng.uniform(0.5, 2.0, 10)
            s = sched.directional_water_fill(e, g, 1.0, capacity_j=capacity)
            levels = 1.0 / g + s
            defer = np.cumsum(e) - np.cumsum(s)
            for i in range(9):
                if s[i] <= 1e-12 or s[i + 1] <= 1e-12:
                    continue
                empty = defer[i] <= 1e-9
                full = math.isfinite(capacity) and defer[i] >= capacity - e[i + 1] - 1e-9
                if empty:
                    assert levels[i] <= levels[i + 1] + 1e-8
                elif full:
                    assert levels[i] >= levels[i + 1] - 1e-8
                else:
                    assert levels[i] == pytest.approx(levels[i + 1], abs=1e-8)

    def test_capacity_limits_deferral(self):
        # capacity 1 J: at least 2 J must be spent in slot 1 to avoid overflow
        e = np.array([3.0, 0.0])
        with pytest.raises(InvalidParameterError):
            sched.directional_water_fill(e, np.array([1.0, 1.0]), 1.0, capacity_j=1.0)
        e = np.array([1.0, 1.0, 0.0])
        s = sched.directional_water_fill(e, np.array([1.0, 1.0, 1.0]), 1.0, capacity_j=1.0)
        # slot-0 spend must cover the part of slot-1's arrival the battery cannot hold
        assert np.cumsum(s)[0] >= np.cumsum(e)[1] - 1.0 - 1e-9
        assert s.sum() == pytest.approx(2.0)

    def test_invalid_inputs(self):
        with pytest.raises(InvalidParameterError):
            sched.directional_water_fill(np.array([1.0]), np.array([0.0]), 1.0)
        with pytest.raises(InvalidParameterError):
            sched.directional_water_fill(np.array([-1.0]), np.array([1.0]), 1.0)


class TestMdp:
    def test_single_state_single_action(self):
        mdp = sched.BatteryMdp(
            arrivals=sched.MarkovArrivals((1.0,), ((1.0,),)),
            battery_buckets=2,
            bucket_j=1.0,
            spend_levels_j=(0.0, 1.0),
            snr_per_joule=2.0,
        )
        policy = sched.mdp_policy_iteration(mdp)
        # steady state: harvest 1 J per slot, spend 1 J per slot
        assert policy.gain == pytest.approx(math.log2(3.0), abs=1e-9)

    def test_policy_iteration_dominates_thresholds(self):
        best = sched.mdp_policy_iteration(DESK_MDP)
        for theta in np.linspace(0.0, DESK_MDP.capacity_j, 20):
            for spend in (1.0, 2.0):
                tp = sched.threshold_policy(DESK_MDP, float(theta), spend)
                assert tp.gain <= best.gain + 1e-9

    def test_best_threshold_close_to_optimal(self):
        best = sched.mdp_policy_iteration(DESK_MDP)
        gains = [
            sched.threshold_policy(DESK_MDP, float(t), s).gain
            for t in np.linspace(0.0, DESK_MDP.capacity_j, 20)
            for s in (1.0, 2.0)
        ]
        ratio = max(gains) / best.gain
        print(f"best threshold policy reaches {ratio:.4f} of the MDP optimum")
        assert ratio >= 0.9

    def test_policy_iteration_agrees_with_value_iteration(self):
        pi_gain = sched.mdp_policy_iteration(DESK_MDP).gain
        vi_gain = sched.value_iteration_gain(DESK_MDP, span_tol=1e-9)
        assert pi_gain == pytest.approx(vi_gain, abs=1e-6)

    def test_reward_scaling_leaves_policy_unchanged(self):
        from dataclasses import replace

        base = sched.mdp_policy_iteration(DESK_MDP)
        scaled = sched.mdp_policy_iteration(replace(DESK_MDP, reward_scale=7.5))
        assert np.array_equal(base.actions, scaled.actions)
        assert scaled.gain == pytest.approx(7.5 * base.gain, rel=1e-9)

    def test_degenerate_chain_raises(self):
        mdp = sched.BatteryMdp(
            arrivals=sched.MarkovArrivals((0.0, 1.0), ((1.0, 0.0), (0.0, 1.0))),
            battery_buckets=4,
            bucket_j=1.0,
            spend_levels_j=(0.0, 1.0),
            snr_per_joule=2.0,
        )
        with pytest.raises(DegenerateModelError):
            sched.mdp_policy_iteration(mdp)

    def test_threshold_endpoints(self):
        never = sched.threshold_policy(DESK_MDP, DESK_MDP.capacity_j + 5.0)
        assert never.gain == pytest.approx(0.0, abs=1e-12)
        always = sched.threshold_policy(DESK_MDP, 0.0, 1.0)
        transmit_states = always.actions[1:, :]  # any non-empty battery
        assert np.all(transmit_states > 0)

    def test_negative_threshold_rejected(self):
        with pytest.raises(InvalidParameterError):
            sched.threshold_policy(DESK_MDP, -1.0)


class TestEvaluatePolicy:
    def test_never_transmit_zero(self):
        never = sched.threshold_policy(DESK_MDP, DESK_MDP.capacity_j + 5.0)
        assert sched.evaluate_policy(never, horizon=5_000, seed=1) == 0.0

    def test_exact_matches_monte_carlo(self):
        policy = sched.mdp_policy_iteration(DESK_MDP)
        exact = sched.evaluate_policy(policy, exact=True)
        mc = sched.evaluate_policy(policy, horizon=1_000_000, seed=4)
        assert exact == pytest.approx(policy.gain, abs=1e-9)
        assert mc == pytest.approx(exact, rel=0.01)

    def test_reproducible(self):
        policy = sched.mdp_policy_iteration(DESK_MDP)
        a = sched.evaluate_policy(policy, horizon=10_000, seed=9)
        b = sched.evaluate_policy(policy, horizon=10_000, seed=9)
        assert a == b


class TestCombinedModeController:
    LINK = LinkState(1e-3, 1e-3, 1e-9, 1.0)

    def test_abundant_ambient_never_uses_swipt(self):
        trace = np.full(20, 5.0)
        result = sched.combined_mode_controller(trace, self.LINK, activation_threshold_j=1.0)
        assert all(m == "non_swipt" for m in result.modes)

    def test_zero_ambient_always_swipt(self):
        result = sched.combined_mode_controller(
            np.zeros(20), self.LINK, activation_threshold_j=0.5
        )
        assert all(m == "swipt" for m in result.modes)
        assert result.total_bits > 0

    def test_outage_recovery_beats_pure_baseline(self):
        trace = np.concatenate([np.full(10, 2.0), np.zeros(10), np.full(10, 2.0)])
        combined = sched.combined_mode_controller(trace, self.LINK, 1.0)
        baseline = sched.combined_mode_controller(trace, self.LINK, 1.0, swipt_enabled=False)
        assert combined.total_bits > baseline.total_bits
        # outside the outage both behave identically
        assert combined.bits_per_slot[:10] == baseline.bits_per_slot[:10]


class TestSerialisation:
    def test_problem_json_round_trip(self):
        p = random_problem(55)
        back = sched.ScheduleProblem.from_json(p.to_json())
        assert back == p

    def test_policy_json_round_trip(self):
        policy = sched.mdp_policy_iteration(DESK_MDP)
        back = sched.Policy.from_json(policy.to_json())
        assert back.mdp == policy.mdp
        assert np.array_equal(back.actions, policy.actions)
        assert back.gain == pytest.approx(policy.gain, rel=1e-12)
        assert sched.evaluate_policy(back, exact=True) == pytest.approx(policy.gain, abs=1e-9)

    def test_schedule_csv_schema(self):
        p = random_problem(56)
        s = sched.offline_optimal(p, 4)
        lines = sched.schedule_to_csv(s).splitlines()
        assert lines[0] == "slot,P_s,P_r,d_s,d_r,bits"
        assert len(lines) == p.slot_count + 1
