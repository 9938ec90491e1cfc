"""One check per acceptance criterion; each prints a PASS/FAIL line."""

import math
import random
import threading
import time

from helpers import bundles, flagged, mutation_suite
from test_rl import _brute_force, _random_group
from stamp.engine import SUCCESS_TEXT, Action, Engine
from stamp.evaluation import (
    grade_from_verdict,
    run_benchmark,
    score_memory_accuracy,
    score_pass_at_k,
)
from stamp.harness import OracleAgent, StepRecord, Trajectory, balance_counts, emit_sft, run_agent_episode
from stamp.protocol import (
    MissingAction,
    MissingMemory,
    MissingThink,
    MissingToolCall,
    StepOutput,
    ToolAction,
    assemble_prompt,
    parse_step_output,
    render_step_output,
    windows,
)
from stamp.rl import (
    AdvantageConfig,
    RewardBreakdown,
    RolloutBuffer,
    format_reward,
    samples_for_trajectory,
    step_grpo_advantages,
    task_reward,
)
from stamp.engine import GradeResult
from stamp.synthesis import default_catalog, generate_from_master_seed, statically_verify

SEEDS = range(1, 101)


def _report(n, ok, detail):
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def test_criterion_01_synthesis_determinism():
    start = time.perf_counter()
    cat = default_catalog()
    first = [generate_from_master_seed(s, cat).digest() for s in SEEDS]
    second = [generate_from_master_seed(s, cat).digest() for s in SEEDS]
    elapsed = time.perf_counter() - start
    _report(1, first == second and elapsed < 60, f"100 bundles twice in {elapsed:.2f}s")


def test_criterion_02_end_to_end_soundness():
    suite = bundles(SEEDS)
    bad = []
    for b in suite:
        bound = b.required_steps + len(b.memory_items) + 3
        traj = run_agent_episode(b, OracleAgent(), bound)
        engine = Engine(b)
        state, obs = engine.reset(bound)
        for s in traj.steps:
            if state.terminal is not None:
                break
            tool = ToolAction.from_dict({"name": "mobile_use", "arguments": s.action})
            state, obs, _ = engine.step(state, tool.to_engine_action())
        if not (traj.success and obs.success_banner == SUCCESS_TEXT and obs.find("result").value == SUCCESS_TEXT
                and state.step_count <= bound):
            bad.append(b.bundle_id)
    agg = run_benchmark(suite, OracleAgent, k=1,
                        max_steps=lambda b: b.required_steps + len(b.memory_items) + 3).aggregate
    _report(2, not bad and agg["t_acc"] == 1.0 and agg["m_acc"] == 1.0,
            f"T-Acc={agg['t_acc']} M-Acc={agg['m_acc']} bound violations={bad}")


def test_criterion_03_gold_exclusivity():
    rng = random.Random(3)
    bad = []
    for b in bundles(SEEDS):
        state, _ = Engine(b).reset(1)
        cands = {b.gold, *b.facts.values()}
        for _ in range(100):
            cands.add("".join(rng.choice("abcdefXYZ0123456789-_ ;") for _ in range(rng.randint(1, 16))))
        hits = sum(state.engine.grade(c).success for c in cands)
        if hits != 1:
            bad.append((b.bundle_id, hits))
    _report(3, not bad, f"bundles with non-unique success: {bad}")


def test_criterion_04_mutation_suite():
    suite = mutation_suite(200)
    caught = sum(flagged(statically_verify(b)) for b, _ in suite)
    false_flags = sum(flagged(statically_verify(b)) for b in bundles(SEEDS))
    rate = caught / len(suite)
    _report(4, rate >= 0.95 and false_flags == 0, f"detected {caught}/{len(suite)}, false flags {false_flags}")


def test_criterion_05_protocol_round_trip():
    rng = random.Random(5)
    alphabet = "abcdefXYZ 0123456789=;,.-_:'\""
    ok = 0
    for _ in range(1000):
        word = lambda: ("x" + "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 24)))).strip()
        tool = rng.choice([
            ToolAction("click", coordinate=(rng.randint(0, 1000), rng.randint(0, 1000))),
            ToolAction("type", coordinate=(rng.randint(0, 1000), rng.randint(0, 1000)), text=word()),
            ToolAction("swipe", coordinate=(500, 700), coordinate2=(500, 100)),
            ToolAction("system_button", button="Back"),
            ToolAction("answer", text=word()),
        ])
        out = StepOutput(word(), word(), rng.choice(["", word()]), tool)
        text = render_step_output(out)
        again = parse_step_output(text)
        ok += again == out and render_step_output(again) == text
    base = render_step_output(StepOutput("t", "a", "k=v", ToolAction("click", coordinate=(1, 2))))
    lines = base.split("\n")
    mutants = {
        MissingThink: "\n".join(lines[3:]),
        MissingAction: "\n".join(lines[:3] + lines[4:]),
        MissingMemory: "\n".join(lines[:4] + lines[5:]),
        MissingToolCall: "\n".join(lines[:5]),
    }
    raised = []
    for text in mutants.values():
        try:
            parse_step_output(text)
            raised.append(None)
        except Exception as exc:  # the exact class is what is checked
            raised.append(type(exc))
    names = [c.__name__ for c in raised if c]
    _report(5, ok == 1000 and raised == list(mutants), f"{ok}/1000 round-trips, errors {names}")


def test_criterion_06_history_protocol():
    class S:
        def __init__(self, i):
            self.index, self.action_desc, self.memory = i, f"step {i}", ""
            self.output_text, self.observation_text = f"out {i}", f"obs {i}"

    results = []
    for t in (1, 3, 7, 9, 12):
        w = windows(t)
        formula = (w.recent == tuple(range(max(1, t - 5), t)) and w.early == tuple(range(1, max(1, t - 5))))
        p = assemble_prompt("goal", [S(i) for i in range(1, t)], t, "now")
        results.append(formula and p.image_count == min(5, t))
    blocks = assemble_prompt("goal", [S(i) for i in range(1, 12)], 12, "now").compressed_history.count("Step ")
    _report(6, all(results) and blocks == 6, f"per-t checks {results}, t=12 blocks {blocks}")


def test_criterion_07_reward_table():
    valid = render_step_output(StepOutput("t", "a", "", ToolAction("click", coordinate=(1, 2))))
    table = [(True, True, 1.0, 1.3), (False, False, 0.0, -0.3), (True, True, 0.5, 1.15)]
    errs = []
    for success, fmt_ok, gamma, want in table:
        r = RewardBreakdown(task_reward(GradeResult(success, "", "")),
                            format_reward([valid] if fmt_ok else ["junk"]), 0.3 * gamma)
        errs.append(abs(r.total - want))
    _report(7, max(errs) <= 1e-12, f"max error {max(errs):.1e}")


def test_criterion_08_step_grpo():
    rng = random.Random(8)
    worst, worst_mean, broadcast = 0.0, 0.0, True
    for i in range(1000):
        mode = "last_step" if i % 2 == 0 else "each_step"
        beta = rng.choice([1.0, 0.8, 0.5]) if mode == "last_step" else 1.0
        samples = _random_group(rng, mode)
        got = step_grpo_advantages(samples, AdvantageConfig(mode=mode, beta=beta))
        want = _brute_force(samples, mode, beta)
        worst = max(worst, max(abs(got[k] - want[k]) for k in got))
        if mode == "last_step":
            for u in {s.task_id for s in samples}:
                finals = [got[s.key] for s in samples if s.task_id == u and s.is_final_step]
                worst_mean = max(worst_mean, abs(sum(finals) / len(finals)))
            if beta == 1.0:
                final = {(s.task_id, s.traj_id): got[s.key] for s in samples if s.is_final_step}
                broadcast &= all(got[s.key] == final[(s.task_id, s.traj_id)] for s in samples)
    fixture = [s for v, total in enumerate([1.3, 0.3, 0.3, 0.3])
               for s in samples_for_trajectory("u", str(v), 3, total)]
    adv = step_grpo_advantages(fixture)
    finals = [adv[("u", str(v), 3)] for v in range(4)]
    fixture_ok = all(abs(a - b) <= 1e-4 for a, b in zip(finals, [1.7321, -0.5774, -0.5774, -0.5774]))
    fixture_ok &= all(adv[("u", str(v), t)] == finals[v] for v in range(4) for t in (1, 2, 3))
    _report(8, worst <= 1e-12 and worst_mean < 1e-9 and fixture_ok and broadcast,
            f"max oracle error {worst:.1e}, max task mean {worst_mean:.1e}, fixture {fixture_ok}")


def test_criterion_09_sft_balance():
    def corpus():
        trajs = []
        for k in range(10):
            steps = []
            for i in range(1, 11):
                mem = i in (3, 7)  # 20% memory steps
                steps.append(StepRecord(index=i, screenshot_ref="s", action={"action": "click", "coordinate": [1, 1]},
                                        conclusion=f"Click {i}", b=mem, m_tilde=f"k{i}=v{k}" if mem else "",
                                        memory=f"k{i}=v{k}" if mem else "", page_title="P",
                                        observation_text=f"screen {i}"))
            trajs.append(Trajectory("goal", steps, GradeResult(True, "g", "g"), f"t{k}", "0"))
        return trajs

    notes, ok = [], True
    for ratio, target in (("1:1", 1), ("3:1", 3)):
        recs = list(emit_sft(corpus(), ratio, n=4))
        mem, ordinary = balance_counts(recs)
        unit = math.ceil(target * ordinary / 20)  # copies of each of the 20 memory records
        within = abs(mem - target * ordinary) <= unit
        weights = all(r.weights["w_bal"] == 4 for r in recs if r.ids["memory"])
        ok &= within and weights
        notes.append(f"{ratio}: {mem}:{ordinary}")
    _report(9, ok, ", ".join(notes))


def test_criterion_10_buffer_on_policy():
    buf = RolloutBuffer(32)
    version = [0]
    lock = threading.Lock()
    drained, stale = [], []
    total = 10_000
    per = total // 4

    def producer(pid):
        for i in range(per):
            with lock:
                v = version[0]
            buf.push((pid, i, v), v)

    def consumer():
        rounds = 0
        while len(drained) + buf.discarded < total:
            buf.wait_nonempty(0.01)
            with lock:
                v = version[0]
                got = buf.drain(v)
                rounds += 1
                if rounds % 7 == 0:
                    version[0] += 1  # interleaved policy update
            stale.extend(b for b in got if b[2] != v)
            drained.extend(got)

    threads = [threading.Thread(target=producer, args=(p,)) for p in range(4)] + [threading.Thread(target=consumer)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(60)
    _report(10, not stale and len(drained) + buf.discarded == total,
            f"drained {len(drained)}, discarded {buf.discarded}, stale {len(stale)}, versions {version[0]}")


def test_criterion_11_metrics():
    rng = random.Random(11)
    monotone = True
    for _ in range(300):
        runs = {str(t): [rng.random() < 0.3 for _ in range(5)] for t in range(rng.randint(1, 8))}
        vals = [score_pass_at_k(runs, k) for k in range(1, 6)]
        monotone &= vals == sorted(vals)
    fixtures = (score_memory_accuracy([1, 0, 0.5]) == 0.5 and score_memory_accuracy([1, 1]) == 1.0
                and score_memory_accuracy([grade_from_verdict(v) for v in
                                           ("Complete Match", "Partial Match", "No Match")]) == 0.5
                and score_pass_at_k({"a": [0, 1, 1]}, 1) == 0 and score_pass_at_k({"a": [0, 1, 1]}, 3) == 1
                and score_pass_at_k({"a": [1], "b": [0]}, 1) == 0.5)
    agg = run_benchmark(bundles(range(1, 21)), lambda: OracleAgent(emit_memory=False)).aggregate
    _report(11, monotone and fixtures and agg["t_acc"] == 1.0 and agg["m_acc"] == 0,
            f"monotone {monotone}, fixtures {fixtures}, suppressed T-Acc={agg['t_acc']} M-Acc={agg['m_acc']}")


def test_criterion_12_engine_throughput():
    b = bundles(range(3, 4))[0]
    engine = Engine(b)
    script = []
    for pid in ("detail-a", "detail-b", "detail-c"):
        script += [Action.open(f"entry-{pid}"), Action.scroll(), Action.back()]
    script = (script * 6)[:50]
    steps = 0
    start = time.perf_counter()
    while time.perf_counter() - start < 1.0:
        state, _ = engine.reset(50)
        for a in script:
            engine.step(state, a)
            steps += 1
    rate = steps / (time.perf_counter() - start)
    _report(12, rate >= 10_000, f"{rate:,.0f} steps/s")
