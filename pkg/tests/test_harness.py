import json
import math
import os
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from xsemparse import kbexec
from xsemparse.errors import CheckpointError, ConfigurationError, DataError, ParameterError, ShapeError
from xsemparse.harness import config as cfgio
from xsemparse.harness.checkpoint import load_checkpoint, read_header, save_checkpoint
from xsemparse.harness.cli import main as cli_main
from xsemparse.harness.decode import beam_search, beam_search_core, greedy_decode
from xsemparse.harness.experiment import (Report, SuiteConfig, build_model, build_view, evaluate, parse_system,
                                          prepare_data, report_digest, run_experiment, run_system)
from xsemparse.harness.grid import expand_grid, evaluate_cell, format_grid, grid_search
from xsemparse.harness.optim import adam_step, noam_lr
from xsemparse.harness.train import TrainConfig, dev_loss, train, train_to_fit
from xsemparse.harness.trends import fraction_curve, non_decreasing, system_ordering, within_points
from xsemparse.parser import EnsembleParser, ModelConfig, TrainItem, Vocab, forward_teacher_forced

TINY = TrainConfig(epochs=3, lr=0.003, warmup_epochs=1, patience=5, layers=1, d_model=16, heads=2,
                   feature_dim=8, bpe_merges=60, beam=2, dropout=0.1)


@pytest.fixture(scope="module")
def data():
    return prepare_data(n_train=60)


# schedule and optimizer


def test_noam_closed_form_values():
    assert noam_lr(40, 128, 40) == pytest.approx(0.001, abs=1e-12)
    assert noam_lr(1, 128, 40) == pytest.approx(0.001 / 40, abs=1e-15)
    assert noam_lr(160, 128, 40) == pytest.approx(0.0005, abs=1e-15)
    with pytest.raises(ParameterError):
        noam_lr(0, 128, 40)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 500), st.sampled_from([16, 128, 512]))
def test_noam_shape(w, d):
    up = [noam_lr(s, d, w) for s in range(1, w + 1)]
    assert all(a < b for a, b in zip(up, up[1:]))
    assert abs(w ** -0.5 - w * w ** -1.5) < 1e-15
    down = [noam_lr(s, d, w) for s in range(w, w + 50)]
    assert all(a > b for a, b in zip(down, down[1:]))
    assert noam_lr(w + 1, d, w) == pytest.approx(noam_lr(w, d, w), rel=1.0 / w)


def test_adam_zero_gradient_and_first_step():
    p = [np.array([1.0, -2.0, 3.0])]
    before = p[0].copy()
    adam_step(p, [np.zeros(3)], {}, 0.1)
    assert np.array_equal(p[0], before)
    g = np.array([0.3, -5.0, 1e-3])
    adam_step(p, [g], {}, 0.01)
    assert np.allclose(p[0] - before, -0.01 * np.sign(g), atol=1e-6)


def test_adam_three_step_scalar_trace():
    # p_t = p_{t-1} - lr * mhat / (sqrt(vhat) + eps), grads 0.5, -0.2, 0.1 at lr 0.1
    p, state = [np.array([1.0])], {}
    trace = []
    for g in (0.5, -0.2, 0.1):
        adam_step(p, [np.array([g])], state, 0.1)
        trace.append(float(p[0][0]))
    for got, want in zip(trace, [0.9000000019999999, 0.8654394181165107, 0.8275002408356955]):
        assert abs(got - want) < 1e-12


def test_adam_shape_errors():
    with pytest.raises(ShapeError):
        adam_step([np.zeros(2)], [np.zeros(3)], {}, 0.1)
    with pytest.raises(ShapeError):
        adam_step([np.zeros(2)], [], {}, 0.1)


# training


def test_train_config_validation():
    with pytest.raises(ParameterError):
        TrainConfig(epochs=0)
    with pytest.raises(ParameterError):
        TrainConfig(dropout=1.0)
    with pytest.raises(ParameterError):
        TrainConfig(patience=-1)


def _view(data, system="seq2seq", config=TINY):
    spec = parse_system(system)
    view = build_view(spec, data)
    return view, build_model(spec, view, config, data.grammar)


def test_train_empty_sets(data):
    view, model = _view(data)
    with pytest.raises(DataError):
        train(model, [], view.dev, TINY)
    with pytest.raises(DataError):
        train(model, view.train, [], TINY)


def test_train_determinism(data):
    curves = []
    for _ in range(2):
        view, model = _view(data, "mt-ensemble")
        curves.append(train(model, view.train, view.dev, TINY).curves)
    assert curves[0] == curves[1]


def test_best_state_restored_and_minimal(data):
    view, model = _view(data)
    res = train(model, view.train, view.dev, replace(TINY, epochs=6))
    assert res.best_dev_loss == min(c["dev_loss"] for c in res.curves)
    assert res.curves[res.best_epoch - 1]["dev_loss"] == res.best_dev_loss
    assert dev_loss(model, view.dev) == pytest.approx(res.best_dev_loss, abs=1e-12)


def test_patience_zero_stops_at_first_non_improving_epoch(data):
    view, model = _view(data)
    # a very large step size makes the dev loss stall within a few epochs
    res = train(model, view.train, view.dev, replace(TINY, epochs=40, patience=0, lr=1.0, warmup_epochs=1))
    losses = [c["dev_loss"] for c in res.curves]
    first_bad = next(i for i in range(1, len(losses)) if losses[i] >= min(losses[:i]))
    assert len(losses) == first_bad + 1 < 40 and res.stopped_early


def test_learnability_smoke():
    words = "a b c d e".split()
    tgt = "( ) x y z".split()
    rng = np.random.default_rng(0)
    items = [TrainItem(f"i{i}", [list(rng.choice(words, 3))], list(rng.choice(tgt, 3))) for i in range(20)]
    cfg = TrainConfig(epochs=50, lr=0.003, warmup_epochs=2, layers=1, d_model=16, heads=2, batch_size=8,
                      dropout=0.0)
    model = EnsembleParser(cfg.model_config(), Vocab(words), Vocab(tgt))
    res = train(model, items, items, replace(cfg, patience=100))
    assert res.curves[49]["train_loss"] < res.curves[0]["train_loss"]


def test_train_to_fit_memorizes_tiny_set():
    items = [TrainItem("a", [["x", "y"]], ["p", "q"]), TrainItem("b", [["y", "x"]], ["q"])]
    cfg = TrainConfig(epochs=300, lr=0.01, warmup_epochs=2, layers=1, d_model=16, heads=2, dropout=0.0)
    model = EnsembleParser(cfg.model_config(), Vocab(["x", "y"]), Vocab(["p", "q"]))
    assert train_to_fit(model, items, cfg, check_every=5) is not None
    assert greedy_decode(model, items, 4) == [["p", "q"], ["q"]]


# beam search


def _step(lp):
    return lambda prefixes: np.stack([lp(p) for p in prefixes])


def test_beam_matches_exhaustive_oracle():
    for seed in range(40):
        lp = oracles.table_model(seed)
        ids, score = oracles.exhaustive_best(lp, 9, 0, 3, 4)
        got = beam_search_core(_step(lp), 9, 0, 5, 4)
        assert got.ids == ids and abs(got.score() - score) < 1e-12


def test_beam_hand_set_logits():
    # by hand: "1 1 2" (length cap) scores -0.61 / 3, "2 eos" -1.05 / 2, "1 eos" -4.5 / 2
    table = {(9,): [-3.0, -0.5, -1.0], (9, 1): [-4.0, -0.1, -3.0], (9, 2): [-0.05, -5.0, -5.0],
             (9, 1, 1): [-5.0, -5.0, -0.01], (9, 1, 1, 2): [-5.0, -5.0, -5.0]}
    lp = lambda p: np.array(table.get(tuple(p), [-1.0, -1.5, -1.5]))
    got = beam_search_core(_step(lp), 9, 0, 5, 3)
    ids, _ = oracles.exhaustive_best(lp, 9, 0, 3, 3)
    assert got.ids == ids == (9, 1, 1, 2)
    assert got.score() == pytest.approx(-0.61 / 3, abs=1e-15)


def test_beam_one_is_greedy():
    for seed in range(30):
        lp = oracles.table_model(seed, vocab=4)
        pre = (9,)
        for _ in range(5):
            pre = pre + (int(np.argmax(lp(pre))),)
            if pre[-1] == 0:
                break
        assert beam_search_core(_step(lp), 9, 0, 1, 5).ids == pre


def test_beam_invariants():
    for seed in range(30):
        lp = oracles.table_model(seed, vocab=4)
        trace = []
        best = beam_search_core(_step(lp), 9, 0, 3, 5, trace=trace)
        retired = []
        for kept in trace:
            scores = [s for _, s, _ in kept]
            assert scores == sorted(scores, reverse=True)
            retired += [s for _, s, done in kept if done]
        assert all(best.score() >= s - 1e-15 for s in retired)


def test_beam_errors_and_ties():
    lp = lambda p: np.log(np.array([0.5, 0.25, 0.25]))
    assert beam_search_core(_step(lp), 9, 0, 4, 3).ids == (9, 0)
    flat = lambda p: np.log(np.full(3, 1 / 3))
    assert beam_search_core(_step(flat), 9, 0, 4, 3).ids == (9, 0)
    with pytest.raises(ParameterError):
        beam_search_core(_step(lp), 9, 0, 0, 3)
    with pytest.raises(ParameterError):
        beam_search_core(_step(lp), 9, 0, 2, 0)


def test_model_beam_one_equals_greedy_and_is_deterministic(data):
    view, model = _view(data, "mt-ensemble")
    train(model, view.train, view.dev, TINY)
    items = view.test[:6]
    greedy = greedy_decode(model, items, 12)
    assert [beam_search(model, it, 1, 12) for it in items] == greedy
    assert [beam_search(model, it, 5, 12) for it in items] == [beam_search(model, it, 5, 12) for it in items]


# experiment orchestration


def test_parse_system_names():
    assert parse_system("seq2seq+feat").features
    assert parse_system("mt-ensemble+shared").shared and parse_system("mt-ensemble").architecture == "ensemble"
    assert parse_system("backtranslation").back_translation
    for bad in ("transformer", "seq2seq+turbo", ""):
        with pytest.raises(ConfigurationError):
            parse_system(bad)


def test_data_views(data):
    bt = build_view(parse_system("backtranslation"), data)
    assert all(it.lang == "EN" for it in bt.train + bt.dev)
    s2s = build_view(parse_system("seq2seq"), data)
    ex0 = data.splits["train"][0]
    assert s2s.train[0].sources == [ex0.utterances_mt[0]]
    assert s2s.test[0].sources == [data.splits["test"][0].utterance_gold_l]
    shared = build_view(parse_system("shared"), data)
    assert len(shared.train) == 2 * len(data.splits["train"])
    ens = build_view(parse_system("mt-ensemble"), data)
    assert ens.train[0].sources == ex0.utterances_mt
    half = build_view(parse_system("seq2seq-gold"), data, gold_fraction=0.5)
    assert len(half.train) == round(0.5 * len(data.splits["train"]))


def test_run_experiment_one_row_and_bounds(data):
    suite = SuiteConfig(systems=["seq2seq"], seeds=[0], train=TINY)
    report = run_experiment(suite, data)
    assert len(report.rows) == 1
    r = report.rows[0]
    assert 0 <= r.test_accuracy <= 1 and 0 <= r.dev_accuracy <= 1
    with pytest.raises(ConfigurationError):
        run_experiment(replace(suite, systems=["nope"]), data)


def test_pipeline_equivalence(data):
    cfg = replace(TINY, seed=2)
    rec, _ = run_system("seq2seq", data, cfg)
    # manual pipeline: view, fresh model, train, beam decode, accuracy
    spec = parse_system("seq2seq")
    view = build_view(spec, data)
    model = build_model(spec, view, cfg, data.grammar)
    train(model, view.train, view.dev, cfg)
    max_len = max(len(it.lf) for it in view.test) + 8
    preds = [beam_search(model, it, cfg.beam, max_len) for it in view.test]
    assert rec.test_accuracy == kbexec.denotation_accuracy(preds, [it.lf for it in view.test], data.kb)


def test_run_experiment_bit_reproducible(data):
    suite = SuiteConfig(systems=["mt-paraphrase"], seeds=[1], train=TINY)
    assert report_digest(run_experiment(suite, data)) == report_digest(run_experiment(suite, data))


def test_report_summary_and_serialization():
    from xsemparse.harness.experiment import RunRecord
    rows = [RunRecord("a", s, 0.5, acc, acc, 3, 0.1, 10, 100) for s, acc in enumerate([0.2, 0.4, 0.6])]
    rep = Report(rows)
    mean, std, n = rep.summary()["a", None]
    assert mean == pytest.approx(0.4) and std == pytest.approx(0.2) and n == 3
    assert Report.from_json(json.loads(json.dumps(rep.to_json()))).rows == rows
    assert rep.to_csv().count("\n") == 4 and "a" in rep.format_table()


def test_trend_checks():
    from xsemparse.harness.experiment import RunRecord

    def rec(system, seed, acc, frac=None):
        return RunRecord(system, seed, 0.0, acc, acc, 1, 0.0, 1, 1, frac)

    rep = Report([rec("backtranslation", s, 0.5) for s in range(3)] + [rec("seq2seq", s, 0.7 + 0.01 * s) for s in range(3)]
                 + [rec("mt-ensemble+shared", s, 0.705) for s in range(3)])
    # seq2seq mean 0.71, std 0.01: the ensemble passes at 0.705 and fails at 0.69
    assert all(c.passed for c in system_ordering(rep))
    low = Report([replace(r, test_accuracy=0.69) if r.system == "mt-ensemble+shared" else r for r in rep.rows])
    assert [c.passed for c in system_ordering(low)] == [True, False]
    rep.rows += [rec("x", s, a, f) for f, accs in ((0.1, [0.3, 0.5]), (0.5, [0.38, 0.42]), (1.0, [0.6, 0.62]))
                 for s, a in enumerate(accs)]
    curve = fraction_curve(rep, "x")
    assert [f for f, *_ in curve] == [0.1, 0.5, 1.0]
    assert non_decreasing(curve).passed
    assert not within_points(curve, 0.5, 1.0, 5).passed and within_points(curve, 0.5, 1.0, 25).passed
    assert not non_decreasing([(0.1, 0.9, 0.0, 2), (0.5, 0.5, 0.01, 2)]).passed


# grid search


def test_expand_grid():
    assert expand_grid({"layers": [1]}) == [{"layers": 1}]
    cells = expand_grid({"layers": [1, 2], "d_model": [8, 16, 32], "p_shuffle": [0.1, 0.2]})
    assert len(cells) == 12 and len({json.dumps(c, sort_keys=True) for c in cells}) == 12
    with pytest.raises(ParameterError):
        expand_grid({})
    with pytest.raises(ParameterError):
        expand_grid({"layers": []})


def test_grid_single_cell_and_reevaluation(data):
    base = replace(TINY, epochs=2)
    (row,) = grid_search({"layers": [1]}, base, data)
    assert row.params == {"layers": 1} and row.rank == 1
    grid = {"d_model": [8, 16], "heads": [1, 2]}
    rows = grid_search(grid, base, data)
    assert len(rows) == 4 and [r.rank for r in rows] == [1, 2, 3, 4]
    # independent re-runs reproduce each cell and hence the ranking
    again = {json.dumps(r.params, sort_keys=True): evaluate_cell(r.params, base, data)[:2] for r in rows}
    keys = sorted(again, key=lambda k: (-again[k][0], again[k][1]))
    assert keys == [json.dumps(r.params, sort_keys=True) for r in rows]
    assert format_grid(rows).count("\n") == 4


# checkpoints


def test_checkpoint_round_trip(tmp_path, data):
    view, model = _view(data, "mt-ensemble+feat")
    train(model, view.train, view.dev, replace(TINY, epochs=1))
    path = tmp_path / "m.npz"
    save_checkpoint(model, path, extra={"k": 1})
    back, extra = load_checkpoint(path)
    assert extra == {"k": 1}
    for it in view.test[:5]:
        assert np.array_equal(forward_teacher_forced(it, model).data, forward_teacher_forced(it, back).data)
    assert evaluate(model, view.test, data.kb, TINY) == evaluate(back, view.test, data.kb, TINY)


def test_checkpoint_corruption(tmp_path):
    model = EnsembleParser(ModelConfig(d_model=8, heads=2, layers=1), Vocab(["a"]), Vocab(["x"]))
    path = tmp_path / "m.npz"
    save_checkpoint(model, path)
    raw = path.read_bytes()
    (tmp_path / "t.npz").write_bytes(raw[:len(raw) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "t.npz")
    (tmp_path / "g.npz").write_bytes(b"garbage")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "g.npz")
    header = read_header(path)
    header["format_version"] = 99
    with np.load(path) as z:
        arrays = {k: z[k] for k in z.files}
    arrays["header"] = np.array(json.dumps(header))
    np.savez(tmp_path / "v.npz", **arrays)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "v.npz")


# config files


def test_config_round_trip(tmp_path):
    cfg = replace(TINY, system="mt-ensemble", seed=4)
    cfgio.save_resolved(cfg, tmp_path / "c.ini")
    assert cfgio.load_train_config(tmp_path / "c.ini") == cfg
    suite = SuiteConfig(systems=["seq2seq"], seeds=[1, 2], gold_fractions=[0.5, 1.0], train=cfg)
    cfgio.save_resolved(suite, tmp_path / "s.ini")
    assert cfgio.load_suite_config(tmp_path / "s.ini") == suite


def test_config_errors():
    with pytest.raises(ConfigurationError):
        cfgio.load_train_config(text="[train]\nbogus = 1\n")
    with pytest.raises(ConfigurationError):
        cfgio.load_train_config(text="[train]\nepochs = many\n")
    with pytest.raises(ConfigurationError):
        cfgio.load_grid(text="[grid]\nwings = 2\n")
    with pytest.raises(ConfigurationError):
        cfgio.load_suite_config(text="[suite]\nsystems = nope\n")
    assert cfgio.load_grid(text="[grid]\nd_model = 8, 16\ncomb_mode = mean, gated\n") == \
        {"d_model": [8, 16], "comb_mode": ["mean", "gated"]}


def test_shipped_configs_load():
    here = os.path.join(os.path.dirname(__file__), "..", "scripts", "configs")
    assert cfgio.load_train_config(os.path.join(here, "toy.ini")).d_model == 32
    assert cfgio.load_suite_config(os.path.join(here, "comparison.ini")).seeds == [0, 1, 2, 3, 4]
    assert cfgio.load_suite_config(os.path.join(here, "partial.ini")).gold_fractions == [0.1, 0.25, 0.5, 1.0]
    assert len(expand_grid(cfgio.load_grid(os.path.join(here, "grid_toy.ini")))) == 4


# command line


def test_cli_end_to_end(tmp_path, capsys):
    d, run = str(tmp_path / "data"), str(tmp_path / "run")
    assert cli_main(["gen-data", "--out", d, "--n-train", "40"]) == 0
    assert {"corpus.jsonl", "kb.json", "grammar.json", "channels.ini", "resolved_config.ini"} <= set(os.listdir(d))
    conf = tmp_path / "c.ini"
    cfgio.save_resolved(replace(TINY, epochs=1), conf)
    assert cli_main(["train", "--data", d, "--config", str(conf), "--out", run]) == 0
    assert {"model.npz", "metrics.jsonl", "resolved_config.ini"} <= set(os.listdir(run))
    capsys.readouterr()
    assert cli_main(["eval", "--checkpoint", f"{run}/model.npz", "--data", d]) == 0
    out = json.loads(capsys.readouterr().out)
    assert 0 <= out["denotation_accuracy"] <= 1
    assert cli_main(["predict", "--checkpoint", f"{run}/model.npz", "--kb", f"{d}/kb.json", "--max-len", "10",
                     "flugi kara denver mi zeigo"]) == 0
    assert "logical_form" in json.loads(capsys.readouterr().out)
    suite = tmp_path / "s.ini"
    suite.write_text(conf.read_text() + "[suite]\nsystems = seq2seq\nseeds = 0\nn_train = 40\n")
    assert cli_main(["report", "--suite", str(suite), "--data", d, "--out", str(tmp_path / "rep")]) == 0
    assert {"report.txt", "report.csv", "report.json"} <= set(os.listdir(tmp_path / "rep"))
    grid = tmp_path / "g.ini"
    grid.write_text("[grid]\nlayers = 1\n")
    assert cli_main(["grid", "--data", d, "--config", str(conf), "--grid", str(grid), "--out",
                     str(tmp_path / "grid")]) == 0


def test_cli_exit_codes(tmp_path, capsys):
    assert cli_main([]) == 1
    assert cli_main(["train", "--bogus"]) == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[train]\nnope = 1\n")
    assert cli_main(["train", "--data", str(tmp_path), "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert cli_main(["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 2
    (tmp_path / "junk.npz").write_bytes(b"junk")
    assert cli_main(["predict", "--checkpoint", str(tmp_path / "junk.npz"), "--kb", "x", "hi"]) == 2
