"""End-to-end acceptance checks; each test records one pass/fail line for the summary."""

import os
import time

import numpy as np
import pytest

from memdep.asm import MachineState, invert_condition, parse_asm, parse_snippet, replay, step
from memdep.autodiff import no_grad
from memdep.autodiff.gradcheck import check_gradients
from memdep.corpusgen import (
    GenSpec,
    arithmetic_programs,
    generate,
    generate_signature_program,
    random_acyclic_listing,
    random_straight_line,
)
from memdep.encoding import (
    DUMMY,
    MASK_ID,
    PAD_ID,
    SENTINEL,
    build_sample,
    curriculum_rate,
    encode_addresses,
    encode_trace,
    mask_sample,
    tokenize,
)
from memdep.encoding.sample import Sample
from memdep.model import MemDepNet
from memdep.train import (
    FinetuneConfig,
    MatchPolicy,
    PretrainConfig,
    evaluate_dependencies,
    finetune_dependency,
    function_samples,
    match_indirect_call,
    policy_grid,
    pretrain,
    resolve_targets,
    score_windows,
)
from memdep.tracer import (
    CoverageSet,
    build_cfg,
    extract_dependencies,
    force_execute,
    initialize_environment,
    trace_function_to_fixpoint,
    trace_program,
)
from memdep.seeding import stream_seed

from test_autodiff import OPS, param, weighted
from test_cli import pipeline, read
from test_model import ModelConfig, traced
from test_train import TRUTH_TABLE

pytestmark = pytest.mark.acceptance


def execute(text, regs=(), mem=()):
    state = MachineState()
    state.registers.update(regs)
    for addr, value in mem:
        state.write(addr, 8, value)
    start = state.copy()
    instrs = parse_snippet(text)
    records = []
    for ins in instrs:
        state, rec = step(state, ins)
        records.append(rec)
    return start, state, instrs, records


# --- 1: emulator fidelity ------------------------------------------------------


def test_emulator_fidelity(criterion):
    t0 = time.perf_counter()
    _, s, _, _ = execute("xor rax,[rbx]", {"rax": 0x2, "rbx": 0x100}, [(0x100, 0x7)])
    worked = [s.registers["rax"] == 0x5]
    _, s, _, _ = execute("add rbp,[rdi]", {"rbp": 0x4, "rdi": 0x200}, [(0x200, 0x8)])
    worked.append(s.registers["rbp"] == 0xC)
    _, s, _, _ = execute("sub rcx,[rdx]", {"rcx": 0x9, "rdx": 0x300}, [(0x300, 0x1)])
    worked.append(s.registers["rcx"] == 0x8)
    _, s, _, _ = execute("push rdi;mov rsi,[rsp]", {"rdi": 0x6, "rsp": 0x8})
    worked.append((s.registers["rsp"], s.read(0x0), s.registers["rsi"]) == (0x0, 0x6, 0x6))
    # the two-trace snippet: the write at 0x06 and the read at 0x1f meet only when rax points at the read cell
    snippet = parse_asm("f:\n  mov [rax],rbx @addr=0x06\n  mov rdi,[0x18] @addr=0x1f\n  ret\n").functions[0]
    found = []
    for rax in (0x18, 0x28):
        state = MachineState()
        state.registers.update({"rax": rax, "rbx": 0x1, "rsp": 0x1000})
        recs = []
        for ins in snippet.instructions[:2]:
            state, rec = step(state, ins)
            recs.append(rec)
        found.append(({d.key() for d in extract_dependencies([_log(recs)])}, state.registers["rdi"]))
    worked.append(found == [({(0x06, 0x1F, "RAW")}, 0x1), (set(), 0x0)])

    rng = np.random.default_rng(2024)
    failures = 0
    for _ in range(1000):
        text = random_straight_line(rng, int(rng.integers(1, 9)))
        regs = {r: int(v) for r, v in zip(("rax", "rcx", "rdx", "rsi", "rdi", "r8", "r9"), rng.integers(0, 1 << 32, 7))}
        regs.update(rbx=0x10000, rsp=0x80000)
        start, end, _, records = execute(text, regs)
        failures += replay(start, records) != end
    elapsed = time.perf_counter() - t0
    ok = all(worked) and failures == 0 and elapsed < 10
    criterion(1, ok, f"worked examples {sum(worked)}/5, replay failures {failures}/1000, {elapsed:.1f}s")
    assert ok


def _log(records):
    from memdep.tracer.forced import TraceLog

    log = TraceLog("f", 0, 0)
    log.records.extend(records)
    return log


# --- 2: branch-flip soundness -------------------------------------------------


def test_branch_flip_soundness(criterion):
    t0 = time.perf_counter()
    unsound = uncovered = over_budget = flips = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        prog = parse_asm(random_acyclic_listing(rng, int(rng.integers(2, 10))))
        fn = prog.functions[0]
        _, snap = initialize_environment(prog)
        cov = CoverageSet()
        logs = trace_function_to_fixpoint(fn, snap, cov, list(range(seed * 64, seed * 64 + 32)), prog)
        cfg = build_cfg(fn)
        uncovered += not cfg.reachable() <= cov
        over_budget += len(logs) > len(cfg.conditionals) + 1
        for log in logs:
            if not log.flipped:
                continue
            flips += len(log.flipped)
            patches = {a: invert_condition(prog.instruction_map()[a].mnemonic) for a in log.flipped}
            rerun = force_execute(
                fn, snap.restore(), CoverageSet(), log.seed, prog, run_index=log.run, policy="none", patches=patches
            )
            unsound += rerun != log
    elapsed = time.perf_counter() - t0
    ok = unsound == 0 and uncovered == 0 and over_budget == 0 and flips > 0 and elapsed < 30
    criterion(2, ok, f"{flips} flips, {unsound} unsound, {uncovered} uncovered CFGs, {over_budget} over c+1 runs, {elapsed:.1f}s")
    assert ok


# --- 3: ground-truth oracle ---------------------------------------------------


def _brute_force(program, traces):
    out = {}
    for fn in program.functions:
        own = {i.address for i in fn.instructions}
        for trace in traces[fn.name]:
            acc = [(r.address, a) for r in trace.records if r.address in own for a in r.memory]
            for x in range(len(acc)):
                for y in range(x + 1, len(acc)):
                    (ia, a), (ib, b) = acc[x], acc[y]
                    if ia != ib and "w" in (a.kind, b.kind) and a.address < b.end and b.address < a.end:
                        out.setdefault((min(ia, ib), max(ia, ib)), None)
    return set(out)


def test_ground_truth_oracle(criterion):
    t0 = time.perf_counter()
    mismatches = pairs = 0
    for seed in range(100):
        g = generate(GenSpec(seed=seed, functions=5, branch_density=0.3))
        traces = trace_program(g.program, seed)
        got = set()
        for fn in g.program.functions:
            got |= extract_dependencies(traces[fn.name], {i.address for i in fn.instructions})
        planted = {d.key() for d in g.dependencies}
        mismatches += len(planted ^ {d.key() for d in got})
        mismatches += len({d.pair for d in got} ^ _brute_force(g.program, traces))
        pairs += len(planted)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and pairs > 0 and elapsed < 60
    criterion(3, ok, f"{pairs} planted pairs, {mismatches} mismatches, {elapsed:.1f}s")
    assert ok


# --- 4: encoding conformance --------------------------------------------------


def _hexrow(row):
    return [f"{int(round(b * 256)):02x}" if b != DUMMY else "-" for b in row]


def _random_sample(rng, n):
    ids = rng.integers(3, 60, size=n)
    ids[rng.integers(0, n + 1):] = PAD_ID
    trace = rng.integers(0, 256, size=(n, 8)) / 256.0
    trace[rng.random(n) < 0.4] = DUMMY
    trace[rng.random(n) < 0.1] = SENTINEL
    return Sample(ids, np.ones(n, dtype=np.int64), np.zeros(n, dtype=np.int64), trace, np.zeros((n, 8)))


def test_encoding_conformance(criterion):
    checks = []
    toks = tokenize(parse_snippet("add rax,0x8;mov [rax],rbx"))
    checks.append(
        (toks.text, toks.positions.tolist(), toks.memflags.tolist())
        == (["add", "rax", "const", "mov", "rax", "rbx"], [1, 2, 3, 1, 2, 3], [0, 0, 0, 0, 1, 0])
    )

    instrs = parse_snippet("add rax,0x8;cmp rax,0x10;je 0x1004a8b5f;push rdi")
    toks = tokenize(instrs)
    state, records = MachineState(), []
    state.registers["rax"] = 0
    for ins in instrs[:3]:
        state, rec = step(state, ins)
        records.append(rec)
    table = encode_trace(instrs, toks, records, destination="input")
    dummy = ["-"] * 8
    expect = [dummy, ["00"] * 8, ["00"] * 7 + ["08"], dummy, ["00"] * 7 + ["08"], ["00"] * 7 + ["10"], dummy,
              ["00", "00", "00", "01", "00", "4a", "8b", "5f"], dummy]
    checks.append([_hexrow(r) for r in table[:9]] == expect and table[9].tolist() == [SENTINEL] * 8)

    instrs = parse_snippet("push rbp;jmp rax", 0x14A8B)
    rows = [_hexrow(r) for r in encode_addresses(instrs, tokenize(instrs))]
    checks.append(rows == [["00"] * 5 + ["01", "4a", "8b"]] * 2 + [["00"] * 5 + ["01", "4a", "8c"]] * 2)

    rng = np.random.default_rng(99)
    violations = 0
    for trial in range(10_000):
        s = _random_sample(rng, int(rng.integers(1, 48)))
        m = mask_sample(s, float(rng.random()), ("interpret", "synthesize", "both")[trial % 3], rng)
        violations += int(s.padding[m.mi].any() or s.padding[m.mt].any() or s.dummy[m.mt].any())
    ok = all(checks) and violations == 0
    criterion(4, ok, f"worked examples {sum(checks)}/3, masking violations {violations}/10000")
    assert ok


# --- 5: gradient correctness --------------------------------------------------


def test_gradient_correctness(criterion):
    t0 = time.perf_counter()
    worst_op = 0.0
    for name, (fn, shapes) in OPS.items():
        inputs = [param(*s) for s in shapes]
        worst_op = max(worst_op, check_gradients(lambda: weighted(fn(*inputs)), inputs))
    from memdep.autodiff import cross_entropy, squared_error

    model = MemDepNet(ModelConfig(d=8, layers=2, heads=2, conv_channels=(1,) * 8))
    s = traced("push rbx;push rbp", {"rbx": 0x40, "rbp": 0x7FFE0000})
    m = mask_sample(s, 0.5, "both", 0)

    def loss():
        code, values = model.forward_pretrain([m])
        return cross_entropy(code, m.code_targets) + squared_error(values, m.trace_targets) * 100.0

    end_to_end = check_gradients(loss, list(model.parameters().values()))
    elapsed = time.perf_counter() - t0
    ok = len(s) == 4 and worst_op < 1e-4 and end_to_end < 1e-3 and elapsed < 120
    criterion(5, ok, f"{len(OPS)} ops worst {worst_op:.2e}, end-to-end {end_to_end:.2e}, {elapsed:.1f}s")
    assert ok


# --- 6: curriculum conformance ------------------------------------------------


def test_curriculum_conformance(criterion):
    samples = []
    for text, _ in arithmetic_programs(6, 60):
        _, _, instrs, records = execute(text)
        samples.append(build_sample(instrs, records))
    model = MemDepNet(ModelConfig(d=16, layers=2, heads=2, conv_channels=(2,) * 8), seed=0)
    result = pretrain(model, samples, PretrainConfig(epochs=10, lower=0.2, upper=0.8, batch_size=16), seed=0)
    expected = [0.2 + (0.8 - 0.2) * k / 10 for k in range(10)]
    rates_ok = [abs(a.rate - e) < 1e-12 for a, e in zip(result.audit, expected)]
    formula_ok = all(curriculum_rate(k + 1, 10, 0.2, 0.8) == a.rate for k, a in enumerate(result.audit))
    counts_ok = all(a.ok for a in result.audit)
    ok = len(result.audit) == 10 and all(rates_ok) and formula_ok and counts_ok
    criterion(6, ok, f"{sum(rates_ok)}/10 epoch rates, count mismatches {sum(a.mismatches for a in result.audit)}")
    assert ok


# --- 7: pretraining competence ------------------------------------------------


def _arithmetic_samples(seed, count):
    out = []
    for text, op in arithmetic_programs(seed, count):
        _, _, instrs, records = execute(text)
        s = build_sample(instrs, records)
        s.labels["op"] = op
        out.append(s)
    return out


def masked_arithmetic_scores(model, samples):
    """Accuracy on the masked target mnemonic and MSE on its masked destination value."""
    code, values = [], []
    for s in samples:
        a = s.anchors()[-1]
        c = s.copy()
        c.mi, c.code_targets = np.array([a]), np.array([s.ids[a]])
        c.ids[a] = MASK_ID
        code.append(c)
        v = s.copy()
        v.mt, v.trace_targets = np.array([a + 1]), s.trace[[a + 1]].copy()
        v.trace[a + 1] = 0.0
        values.append(v)
    hits, errors = [], []
    with no_grad():
        for k in range(0, len(samples), 64):
            logits, _ = model.forward_pretrain(code[k : k + 64])
            hits.extend(logits.data.argmax(-1) == np.array([c.code_targets[0] for c in code[k : k + 64]]))
            _, pred = model.forward_pretrain(values[k : k + 64])
            target = np.stack([v.trace_targets[0] for v in values[k : k + 64]])
            errors.extend(((pred.data - target) ** 2).mean(-1))
    return float(np.mean(hits)), float(np.mean(errors))


def test_pretraining_competence(criterion):
    train, test = _arithmetic_samples(0, 5000), _arithmetic_samples(1, 500)
    model = MemDepNet(seed=stream_seed(0, "init"))
    pretrain(model, train, PretrainConfig(epochs=10), seed=0)
    acc, mse = masked_arithmetic_scores(model, test)
    ok = acc >= 0.95 and mse <= 1e-3
    criterion(7, ok, f"masked-mnemonic accuracy {acc:.3f} (>= 0.95), masked-value MSE {mse:.2e} (<= 1e-3)")
    assert ok


# --- 8: finetuning competence -------------------------------------------------

FINETUNE_EPOCHS = 30
FINETUNE_LR = 1e-4


def _dependency_corpus():
    labeled, pretraining, rearranged = [], [], 0
    for seed in range(25):
        g = generate(GenSpec(seed=seed, functions=20))
        rearranged += g.text.count("[rcx+rdx]")
        traces = trace_program(g.program, seed)
        for fn in g.program.functions:
            labeled.append(function_samples(fn, {d.pair for d in g.function_dependencies(fn.name)}))
            pretraining.append([s for t in traces[fn.name] for s in function_samples(fn, records=t.records)])
    return labeled, pretraining, rearranged


def _pooled_f1(model, test):
    predicted, reference = set(), set()
    for k, (s, scores) in enumerate(zip(test, score_windows(model, test))):
        reference |= {(k, i, j) for i, j in s.labels["deps"]}
        predicted |= {(k, i, j) for (i, j), p in scores.items() if p >= 0.5}
    return evaluate_dependencies(predicted, reference).f1


def test_finetuning_competence(criterion):
    labeled, pretraining, rearranged = _dependency_corpus()
    assert len(labeled) == 500 and rearranged > 0
    order = np.random.default_rng(0).permutation(len(labeled))
    cut = int(0.8 * len(labeled))
    train = [s for k in order[:cut] for s in labeled[k]]
    test = [s for k in order[cut:] for s in labeled[k]]
    pre_samples = [s for k in order[:cut] for s in pretraining[k]]

    base = MemDepNet(seed=stream_seed(0, "init"))
    pretrain(base, pre_samples, PretrainConfig(), seed=0)
    config = FinetuneConfig(epochs=FINETUNE_EPOCHS, lr=FINETUNE_LR)
    finetune_dependency(base, train, config, seed=0)
    with_pretrain = _pooled_f1(base, test)

    scratch = MemDepNet(seed=stream_seed(0, "init"))
    finetune_dependency(scratch, train, config, seed=0)
    without = _pooled_f1(scratch, test)
    ok = with_pretrain >= 0.90 and with_pretrain > without
    criterion(8, ok, f"held-out F1 {with_pretrain:.3f} with pretraining (>= 0.90), {without:.3f} without")
    assert ok


# --- 9: matcher exactness -----------------------------------------------------


def test_matcher_exactness(criterion):
    grid = policy_grid(3)
    errors = sum(
        "".join("1" if match_indirect_call(caller, callee, p) else "0" for p in grid) != want
        for caller, callee, want in TRUTH_TABLE
    )
    wrong = sites = 0
    policy = MatchPolicy("strict", use_return=True, use_args=True, required=3)
    for seed in range(50):
        g = generate_signature_program(seed, functions=8)
        resolved = resolve_targets(g.call_sites, g.signatures, policy)
        sites += len(g.call_graph)
        wrong += sum(resolved.get(site) != [name] for site, name in g.call_graph.items())
    ok = len(TRUTH_TABLE) == 32 and errors == 0 and wrong == 0
    criterion(9, ok, f"truth-table errors {errors}/32, call-graph errors {wrong}/{sites} sites over 50 programs")
    assert ok


# --- 10: reproducibility ------------------------------------------------------


def test_pipeline_reproducibility(criterion, tmp_path):
    a = pipeline(str(tmp_path / "first"), seed=11)
    b = pipeline(str(tmp_path / "second"), seed=11)
    same = [read(os.path.join(a["eval"], n)) == read(os.path.join(b["eval"], n)) for n in ("report.txt", "report.jsonl")]
    ok = all(same)
    criterion(10, ok, f"{sum(same)}/2 EvalReport files byte-identical across two seeded runs")
    assert ok
