import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memdep.asm import MachineState, parse_asm, parse_snippet, step
from memdep.autodiff import Adam, Tensor, bce_with_logits
from memdep.corpusgen import GenSpec, generate
from memdep.encoding import build_sample, curriculum_rate, mask_sample
from memdep.model import REGIONS, MemDepNet, ModelConfig
from memdep.model.network import RETURN_CLASSES, TYPE_CLASSES
from memdep.tracer import extract_dependencies, trace_program
from memdep.train import (
    FinetuneConfig,
    MatchPolicy,
    PretrainConfig,
    ProbeConfig,
    SignatureRecord,
    candidate_pairs,
    dependency_loss,
    evaluate_dependencies,
    finetune_dependency,
    function_samples,
    labeled_pairs,
    macro_f1,
    match_indirect_call,
    policy_grid,
    predict_pipeline,
    pretrain,
    pretrain_loss,
    region_ids,
    resolve_targets,
    threshold_sweep,
    train_region_probe,
)
from memdep.train.pretrain import batch_loss
from memdep.train.finetune import pair_anchors

SMALL = ModelConfig(d=16, layers=2, fusion_layer=1, heads=2, conv_channels=(2,) * 8)


def traced_sample(text):
    ins = parse_snippet(text)
    state, recs = MachineState(), []
    for i in ins:
        state, r = step(state, i)
        recs.append(r)
    return build_sample(ins, recs)


def mov_corpus(n, seed=0):
    rng = np.random.default_rng(seed)
    regs = ("rax", "rbx", "rcx", "rdx")
    out = []
    for _ in range(n):
        d, s = rng.choice(regs, 2, replace=False)
        out.append(traced_sample(f"mov {d},{int(rng.integers(1, 200)):#x};mov {s},{d}"))
    return out


# --- losses ------------------------------------------------------------------


def test_pretrain_loss_zero_for_perfect_prediction():
    logits = Tensor(np.array([[0.0, -1000.0, -1000.0], [-1000.0, -1000.0, 0.0]]))
    values = np.array([[0.5] * 8])
    loss = pretrain_loss(logits, np.array([0, 2]), Tensor(values), values)
    assert float(loss.data) == 0.0


def test_pretrain_loss_alpha_weighting():
    pred = Tensor(np.array([[0.1] + [0.0] * 7]))
    loss = pretrain_loss(Tensor(np.zeros((0, 4))), np.zeros(0, dtype=int), pred, np.zeros((1, 8)), alpha=100.0)
    assert float(loss.data) == pytest.approx(1.0)


def test_pretrain_loss_rejects_nonpositive_alpha():
    with pytest.raises(ValueError):
        pretrain_loss(Tensor(np.zeros((1, 2))), np.array([0]), Tensor(np.zeros((0, 8))), np.zeros((0, 8)), alpha=0.0)


def test_bce_perfect_and_uninformed():
    assert float(dependency_loss(Tensor(np.array([-800.0, 800.0])), np.array([0, 1])).data) == 0.0
    assert float(dependency_loss(Tensor(np.zeros(5)), np.array([0, 1, 1, 0, 1])).data) == pytest.approx(math.log(2))


# --- pretraining -----------------------------------------------------------


def test_curriculum_rates_and_exact_mask_audit():
    samples = mov_corpus(40)
    result = pretrain(MemDepNet(SMALL, seed=0), samples, PretrainConfig(epochs=10, batch_size=8), seed=3)
    rates = [a.rate for a in result.audit]
    assert rates == pytest.approx([0.2 + 0.06 * k for k in range(10)])
    assert rates == [curriculum_rate(k, 10, 0.2, 0.8) for k in range(1, 11)]
    assert all(a.ok for a in result.audit)
    assert sum(a.code_maskable + a.trace_maskable for a in result.audit) > 0


def test_pretraining_is_bit_identical_under_equal_seeds():
    samples = mov_corpus(24)
    cfg = PretrainConfig(epochs=2, batch_size=8)
    a = pretrain(MemDepNet(SMALL, seed=1), samples, cfg, seed=5)
    b = pretrain(MemDepNet(SMALL, seed=1), samples, cfg, seed=5)
    assert a.losses == b.losses
    c = pretrain(MemDepNet(SMALL, seed=1), samples, cfg, seed=6)
    assert a.losses != c.losses


def test_frozen_batch_loss_strictly_decreases():
    rng = np.random.default_rng(0)
    masked = [mask_sample(s, 0.5, "both", rng) for s in mov_corpus(8)]
    model = MemDepNet(SMALL, seed=0)
    opt = Adam(list(model.parameters().values()), lr=3e-4)
    losses = []
    for _ in range(50):
        opt.zero_grad()
        loss = batch_loss(model, masked, 100.0, training=False)
        loss.backward()
        opt.step()
        losses.append(float(loss.data))
    assert all(b < a for a, b in zip(losses, losses[1:]))


# --- evaluation ------------------------------------------------------------


def test_report_set_arithmetic():
    rep = evaluate_dependencies({"a", "d"}, {"a", "b", "c"})
    assert (rep.detect, rep.miss, rep.fp) == (1, 2, 1)
    same = evaluate_dependencies({"a", "b"}, {"a", "b"})
    assert (same.miss, same.fp, same.f1) == (0, 0, 1.0)


def test_report_matches_brute_force_recount():
    g = generate(GenSpec(seed=11, functions=20))
    reference = sorted(d.pair for d in g.dependencies)
    rng = np.random.default_rng(0)
    kept = [p for p in reference if rng.random() < 0.6]
    addrs = sorted(g.regions)
    extra = [(addrs[i], addrs[j]) for i, j in rng.integers(0, len(addrs), (30, 2)) if i < j]
    predicted = kept + extra
    rep = evaluate_dependencies(predicted, reference)
    detect = miss = fp = 0
    for r in reference:
        found = False
        for p in predicted:
            if p == r:
                found = True
        detect += found
        miss += not found
    for p in set(predicted):
        fp += all(p != r for r in reference)
    assert (rep.detect, rep.miss, rep.fp) == (detect, miss, fp)
    assert rep.precision == pytest.approx(detect / (detect + fp))
    assert rep.recall == pytest.approx(detect / (detect + miss))


def test_report_serialisations():
    rep = evaluate_dependencies({(1, 2)}, {(1, 2), (3, 4)}, kinds={(1, 2): "RAW", (3, 4): "WAW"})
    assert rep.breakdown == {"RAW": (1, 0), "WAW": (0, 1)}
    assert rep.to_text().splitlines()[1].split()[:3] == ["1", "1", "0"]
    lines = rep.to_records().splitlines()
    assert len(lines) == 3 and '"scope":"all"' in lines[0]


def test_threshold_sweep_rows():
    rows = threshold_sweep({(1, 2): 0.9, (3, 4): 0.3}, {(1, 2)}, thresholds=(0.2, 0.5))
    assert rows == [(0.2, 1, 0, 1), (0.5, 1, 0, 0)]


def test_macro_f1_against_hand_confusion_matrix():
    y_true = [0, 0, 0, 1, 1, 1, 2, 2, 3, 3]
    y_pred = [0, 0, 1, 1, 1, 2, 2, 2, 3, 0]
    # per-class F1: 2/3, 2/3, 0.8, 2/3
    assert macro_f1(y_true, y_pred, range(4)) == pytest.approx(0.7)


# --- matcher ---------------------------------------------------------------


def sig(arity, types="", ret="void"):
    return SignatureRecord.of(arity, types.split(), ret)


# bits follow policy_grid(): loose, loose+ret, loose+arg3, loose+arg3+ret, then the strict four
TRUTH_TABLE = [
    (sig(3, "int ptr char", "int"), sig(3, "int ptr char", "int"), "11111111"),
    (sig(3, "int ptr char", "int"), sig(3, "int ptr float", "int"), "11001100"),
    (sig(3, "int ptr char"), sig(2, "int ptr"), "11110000"),
    (sig(2, "int ptr", "int"), sig(3, "int ptr char", "int"), "00000000"),
    (sig(1, "long", "int"), sig(1, "long"), "10101010"),
    (sig(0), sig(0), "11111111"),
    (sig(0, "", "int"), sig(0), "10101010"),
    (sig(4, "int int int int"), sig(0, "", "double"), "11110000"),
    (sig(7, "ptr ptr ptr", "ptr"), sig(7, "ptr ptr ptr", "ptr"), "11111111"),
    (sig(7, "ptr ptr ptr", "ptr"), sig(6, "ptr ptr int", "ptr"), "11000000"),
    (sig(5, "char short long"), sig(5, "char short long"), "11111111"),
    (sig(5, "char short long", "float"), sig(2, "char short"), "10100000"),
    (sig(2, "int ptr"), sig(2, "ptr int", "int"), "11001100"),
    (sig(1, "double", "double"), sig(1, "float", "double"), "11001100"),
    (sig(3, "int int int"), sig(1, "int"), "11110000"),
    (sig(3, "int int int"), sig(1, "char"), "11000000"),
    (sig(0), sig(1, "int", "int"), "00000000"),
    (sig(6, "short short short", "long"), sig(6, "short short short", "int"), "11111111"),
    (sig(6, "short short short", "long"), sig(7, "short short short", "int"), "00000000"),
    (sig(3, "int ptr char", "int"), sig(3, "int char ptr", "int"), "11001100"),
    (sig(2, "long long"), sig(2, "long long"), "11111111"),
    (sig(2, "long long", "char"), sig(2, "long long"), "10101010"),
    (sig(4, "float double float"), sig(3, "float double float", "short"), "11110000"),
    (sig(4, "float double float", "short"), sig(3, "float double int", "short"), "11000000"),
    (sig(1, "ptr", "ptr"), sig(0), "10100000"),
    (sig(1, "ptr", "ptr"), sig(0, "", "ptr"), "11110000"),
    (sig(3, "char char char"), sig(4, "char char char"), "00000000"),
    (sig(5, "int ptr char", "int"), sig(5, "int ptr char", "long"), "11111111"),
    (sig(2, "int ptr", "int"), sig(2, "int ptr"), "10101010"),
    (sig(1, "char"), sig(1, "short"), "11001100"),
    (sig(7, "int int int"), sig(3, "int int int"), "11110000"),
    (sig(2, "double ptr", "long"), sig(1, "double", "long"), "11110000"),
]


def test_policy_grid_names():
    assert [p.name for p in policy_grid()] == [
        "loose", "loose+ret", "loose+arg3", "loose+arg3+ret",
        "strict", "strict+ret", "strict+arg3", "strict+arg3+ret",
    ]


def test_truth_table_of_32_pairs():
    assert len(TRUTH_TABLE) == 32
    grid = policy_grid(3)
    errors = [
        (k, want)
        for k, (caller, callee, want) in enumerate(TRUTH_TABLE)
        if "".join("1" if match_indirect_call(caller, callee, p) else "0" for p in grid) != want
    ]
    assert errors == []


def test_matcher_examples():
    caller, callee = sig(3, "int ptr char"), sig(2, "int ptr")
    assert match_indirect_call(caller, callee, MatchPolicy("loose"))
    assert not match_indirect_call(caller, callee, MatchPolicy("strict"))
    void_caller = sig(1, "int")
    for ret in RETURN_CLASSES:
        assert match_indirect_call(void_caller, sig(1, "int", ret), MatchPolicy(use_return=True))
    a, b = sig(3, "int ptr char"), sig(3, "int ptr float")
    assert match_indirect_call(a, b, MatchPolicy(use_args=True, required=2))
    assert not match_indirect_call(a, b, MatchPolicy(use_args=True, required=3))


def test_unknown_argument_types_fail_with_diagnostic():
    unknown = SignatureRecord(2, None, "int")
    with pytest.warns(UserWarning):
        assert not match_indirect_call(unknown, sig(2, "int int", "int"), MatchPolicy(use_args=True))
    assert match_indirect_call(unknown, sig(2, "int int", "int"), MatchPolicy())


def test_signature_record_validation_and_lines():
    with pytest.raises(ValueError):
        SignatureRecord(8)
    with pytest.raises(ValueError):
        SignatureRecord(1, (None, None, None))
    with pytest.raises(ValueError):
        SignatureRecord(0, ("int", None, None))
    s = sig(2, "int ptr", "char")
    assert s.line("f") == "f 2 int ptr - char"
    assert SignatureRecord.parse("f 2 int ptr - char") == ("f", s)
    assert SignatureRecord.parse("g 2 ? ? ? int")[1].args is None


signatures = st.builds(
    lambda a, types, ret: SignatureRecord.of(a, types, ret),
    st.integers(0, 7),
    st.lists(st.sampled_from(TYPE_CLASSES), min_size=3, max_size=3),
    st.sampled_from(RETURN_CLASSES),
)


@settings(max_examples=300, deadline=None)
@given(signatures, signatures)
def test_enabling_criteria_never_adds_matches(caller, callee):
    m = lambda **kw: match_indirect_call(caller, callee, MatchPolicy(**kw))
    for arity in ("loose", "strict"):
        for req in (2, 3):
            base = m(arity=arity, required=req)
            assert m(arity=arity, use_return=True, required=req) <= base
            assert m(arity=arity, use_args=True, required=req) <= base
            assert m(arity=arity, use_args=True, use_return=True, required=req) <= m(arity=arity, use_args=True, required=req)
        assert m(arity="strict") <= m(arity="loose")
    assert m(use_args=True, required=3) <= m(use_args=True, required=2)


def test_resolve_targets_sorted_candidates():
    functions = {"b": sig(1, "int"), "a": sig(1, "int", "int"), "c": sig(2, "int int")}
    out = resolve_targets({0x10: sig(1, "int")}, functions, MatchPolicy("strict"))
    assert out == {0x10: ["a", "b"]}


# --- finetuning and pipeline ---------------------------------------------

REARRANGED = """
f:
    mov rax,rsi
    mov rdi,[rax+0x8]
    mov [rcx+0x10],rdx
    mov rbx,rsi
    xor rbp,rbp
    add rbp,0x8
    mov [rbp+rbx],rdi
    mov rdx,[rcx+0x20]
    ret
"""


def traced_function_samples(text, name="f"):
    program = parse_asm(text)
    traces = trace_program(program, seed=0)
    fn = program.function(name)
    deps = extract_dependencies(traces[name], {i.address for i in fn.instructions})
    return program, function_samples(fn, {d.pair for d in deps})


def test_rearranged_base_pair_labels():
    _, (sample,) = traced_function_samples(REARRANGED)
    rows = {(i, j): y for i, j, y in labeled_pairs(sample, np.random.default_rng(0), negative_ratio=10)}
    anchors = pair_anchors(sample)
    assert rows[(anchors[1], anchors[6])] == 1  # base+disp read, base+index write
    assert rows[(anchors[2], anchors[7])] == 0


def test_negatives_capped_at_ratio():
    _, (sample,) = traced_function_samples(REARRANGED)
    rows = labeled_pairs(sample, np.random.default_rng(0), negative_ratio=1)
    pos = int(rows[:, 2].sum())
    assert pos == len(sample.labels["deps"]) and len(rows) - pos <= pos


def test_candidate_pair_count():
    _, (sample,) = traced_function_samples(REARRANGED)
    m = len(sample.labels["memory"])
    assert m == 4 and len(candidate_pairs(sample)) == m * (m - 1) // 2


def test_single_memory_instruction_predicts_nothing():
    program = parse_asm("f:\n    mov rax,[rdi]\n    add rax,1\n    ret\n")
    result = predict_pipeline(MemDepNet(SMALL), program, threshold=0.0)
    assert result.scores == {} and result.predicted == set()


def test_pipeline_scores_every_pair():
    program, _ = traced_function_samples(REARRANGED)
    result = predict_pipeline(MemDepNet(SMALL), program)
    assert len(result.scores) == 6
    assert all(0.0 <= p <= 1.0 for p in result.scores.values())


def test_finetune_skips_functions_without_pairs_and_learns():
    program = parse_asm("g:\n    add rax,1\n    ret\n")
    empty = function_samples(program.function("g"))
    _, samples = traced_function_samples(REARRANGED)
    model = MemDepNet(SMALL, seed=0)
    with pytest.warns(UserWarning):
        result = finetune_dependency(model, empty + samples * 4, FinetuneConfig(epochs=15, lr=3e-3, batch_size=4), seed=0)
    assert result.skipped == ["g"]
    assert result.epoch_losses[-1] < result.epoch_losses[0]


def test_finetune_rejects_corpus_without_pairs():
    program = parse_asm("g:\n    add rax,1\n    ret\n")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ValueError):
            finetune_dependency(MemDepNet(SMALL), function_samples(program.function("g")))


# --- probes ----------------------------------------------------------------


def test_region_probe_trains_head_only():
    g = generate(GenSpec(seed=2, functions=4, min_ops=6, max_ops=10))
    ids = region_ids(g.regions)
    samples = [s for fn in g.program.functions for s in function_samples(fn, regions=ids)]
    model = MemDepNet(SMALL, seed=0)
    before = model.state()
    result = train_region_probe(model, samples, ProbeConfig(epochs=3), seed=0)
    after = model.state()
    changed = {n for n in before if not np.array_equal(before[n], after[n])}
    assert changed and all(n.startswith("head.region.") for n in changed)
    acc, f1 = result.scores["region"]
    assert 0.0 <= acc <= 1.0 and 0.0 <= f1 <= 1.0
    assert set(REGIONS) == {"stack", "heap", "global", "other"}
