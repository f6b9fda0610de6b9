"""Acceptance criteria. Each test prints one PASS/FAIL line, then asserts.

Criteria 1, 6 and 7 train on 20,000 simulated rows and take a few minutes
on one CPU core.
"""

import hashlib
from collections import Counter

import numpy as np
import pytest

import oracles
from cardicat import nn, simgen
from cardicat.cli import main
from cardicat.fidelity import (corr_score, evaluate, ks_score, mixed_score, pair_tvd_score,
                               tvd_score)
from cardicat.model import TrainConfig, conditional_prepare, init_model
from cardicat.schema import encode, infer_schema, split_indices
from cardicat.synthesis import generate
from cardicat.train import train
from conftest import numeric_grad, rel_err, toy_config, toy_data, toy_schema

SIM_ROWS = 20_000
EPOCHS = 50
BATCH = 500
SAMPLE_ROWS = 4000
SEEDS = (0, 1, 2)
MARGIN = 0.03


@pytest.fixture
def verdict(capsys):
    def emit(number, name, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number} [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return ok
    return emit


def simulated(seed):
    """(schema with train moments, train table, test table) for one seed."""
    table = simgen.simulate(simgen.SimSpec(SIM_ROWS, seed))
    train_idx, test_idx = split_indices(len(table), 0.8, seed)
    train_t, test_t = table.take(train_idx), table.take(test_idx)
    return infer_schema(table).with_moments(train_t), train_t, test_t


def fit(schema, train_t, seed, **kw):
    cfg = TrainConfig(epochs=EPOCHS, batch_size=BATCH, seed=seed, **kw)
    if cfg.mode == "conditional":
        schema = conditional_prepare(schema)
    root = nn.Rng(seed)
    model = init_model(schema, cfg, root.child(1))
    train(model, encode(schema, train_t), cfg, root.child(2))
    return model


def test_criterion_1_directional_reproduction(verdict):
    margins = {"marginal_categorical": [], "pairs_categorical": []}
    lines = []
    for seed in SEEDS:
        schema, train_t, test_t = simulated(seed)
        test = encode(schema, test_t)
        agg = {}
        for mode in ("cardicat", "baseline_onehot"):
            model = fit(schema, train_t, seed, mode=mode)
            agg[mode] = evaluate(schema, test, generate(model, SAMPLE_ROWS, seed=seed)).aggregates
        for key in margins:
            margins[key].append(agg["cardicat"][key] - agg["baseline_onehot"][key])
        lines.append(f"seed {seed}: cardicat {agg['cardicat']['marginal_categorical']:.3f}/"
                     f"{agg['cardicat']['pairs_categorical']:.3f} vs baseline "
                     f"{agg['baseline_onehot']['marginal_categorical']:.3f}/"
                     f"{agg['baseline_onehot']['pairs_categorical']:.3f}")
    med = {k: float(np.median(v)) for k, v in margins.items()}
    ok = all(v >= MARGIN for v in med.values())
    verdict(1, "directional reproduction", ok,
            f"median margins marginal {med['marginal_categorical']:+.3f}, pairs "
            f"{med['pairs_categorical']:+.3f} (need >= +{MARGIN}); " + "; ".join(lines))
    assert ok


def test_criterion_2_parameter_economy(verdict, tmp_path, capsys):
    data = tmp_path / "sim.csv"
    assert main(["simulate", "--out", str(data), "--rows", "2000"]) == 0
    counts = {}
    for mode in ("cardicat", "baseline_onehot"):
        assert main(["fit", "--data", str(data), "--checkpoint", str(tmp_path / f"{mode}.ckpt"),
                     "--epochs", "0", "--mode", mode]) == 0
    for line in capsys.readouterr().out.splitlines():
        if line.startswith("trainable parameters"):
            mode = line.split("(")[1].split(")")[0]
            counts[mode] = int(line.rsplit(":", 1)[1])
    ratio = counts["cardicat"] / counts["baseline_onehot"]
    ok = ratio <= 0.9
    verdict(2, "parameter economy", ok,
            f"cardicat {counts['cardicat']} vs baseline {counts['baseline_onehot']} "
            f"(ratio {ratio:.3f}, need <= 0.9)")
    assert ok


def test_criterion_3_gradient_correctness(verdict):
    cfg = toy_config(lambda_reg=3.0)
    assert cfg.precision == "float64" and cfg.latent_dim == 3
    model = init_model(toy_schema(), cfg, nn.Rng(3))
    assert model.emb_dims["cat"] == 2
    model.embeddings["cat"].data *= 1.3  # off init, so the regularizer contributes too
    rng = np.random.default_rng(7)
    for p in model.store:  # keep ReLU pre-activations away from the kink at 0
        if p.name.endswith(".bias"):
            p.data[...] = rng.uniform(-0.1, 0.1, p.data.shape)
    batch = model.batch_from(toy_data(toy_schema(), 5, 1))
    eps = np.random.default_rng(9).normal(size=(5, 3))
    model.store.zero_grad()
    model.loss(batch, eps).total.backward()
    errs = {}
    for p in model.store:
        num = numeric_grad(lambda: model.loss(batch, eps).total.item(), p.data, h=1e-5)
        errs[p.name] = rel_err(p.grad, num)
    worst = max(errs, key=errs.get)
    ok = errs[worst] < 1e-4
    verdict(3, "gradient correctness", ok,
            f"{len(errs)} parameters, worst rel. err {errs[worst]:.2e} ({worst}), need < 1e-4")
    assert ok


def test_criterion_4_loss_term_exactness(verdict):
    model = init_model(toy_schema(), toy_config(), nn.Rng(0))
    batch = model.batch_from(toy_data(toy_schema(), 5, 1))
    reg0 = abs(model.loss(batch, np.zeros((5, 3))).reg.item())
    for p in (model.enc_mu.weight, model.enc_mu.bias, model.enc_logvar.weight,
              model.enc_logvar.bias):
        p.data[...] = 0.0
    kl0 = abs(model.loss(batch, np.zeros((5, 3))).kl.item())
    rng = np.random.default_rng(1)
    worst = 0.0
    for i in range(50):
        cfg = toy_config(lambda_kl=rng.uniform(0, 5), lambda_reg=rng.uniform(0, 2000),
                         loss_factor=rng.uniform(0, 10))
        m = init_model(toy_schema(), cfg, nn.Rng(i))
        m.embeddings["cat"].data *= rng.uniform(0.2, 3)
        t = m.loss(batch, rng.normal(size=(5, 3)))
        want = cfg.loss_factor * t.recon.item() + cfg.lambda_kl * t.kl.item() \
            + cfg.lambda_reg * t.reg.item()
        worst = max(worst, abs(t.total.item() - want))
    ok = kl0 <= 1e-12 and reg0 <= 1e-12 and worst <= 1e-9
    verdict(4, "loss-term exactness", ok,
            f"kl at N(0,1) {kl0:.1e}, reg at init {reg0:.1e}, total identity error {worst:.1e}")
    assert ok


def test_criterion_5_metric_oracles(verdict):
    worst = 0.0
    for seed in range(100):
        d = oracles.random_instance(np.random.default_rng(seed))
        rc, rc2, rn, rn2 = d["real_cat"], d["real_cat2"], d["real_num"], d["real_num2"]
        sc, sc2, sn, sn2 = d["synth_cat"], d["synth_cat2"], d["synth_num"], d["synth_num2"]
        pairs = [
            (ks_score(rn, sn), oracles.ks(rn, sn)),
            (tvd_score(rc, sc), oracles.tvd(rc, sc)),
            (pair_tvd_score((rc, rc2), (sc, sc2)), oracles.pair_tvd((rc, rc2), (sc, sc2))),
            (corr_score((rn, rn2), (sn, sn2)), oracles.corr((rn, rn2), (sn, sn2))),
            (mixed_score(rc, rn, sc, sn), oracles.mixed(rc, rn, sc, sn)),
        ]
        for got, want in pairs:
            if got is None or want is None:
                worst = max(worst, 0.0 if got is want else np.inf)
            else:
                worst = max(worst, abs(got - want))
    schema, _, test_t = simulated(0)
    data = encode(schema, test_t)
    self_scores = evaluate(schema, data, data).scores()
    ok = worst <= 1e-12 and all(s == 1.0 for s in self_scores)
    verdict(5, "metric oracle equivalence", ok,
            f"max |metric - oracle| over 100 instances {worst:.1e}; evaluate(d, d) "
            f"min score {min(self_scores)} over {len(self_scores)} scores")
    assert ok


def test_criterion_6_regularizer_effect(verdict):
    schema, train_t, _ = simulated(0)
    drift = {}
    for lam in (0.0, 1.0):
        model = fit(schema, train_t, 0, lambda_reg=lam)
        drift[lam] = float(np.mean(list(model.variance_drift().values())))
    ok = drift[1.0] < drift[0.0]
    verdict(6, "regularizer effect", ok,
            f"mean |V - V0| with lambda2=0: {drift[0.0]:.5f}, with lambda2=1: {drift[1.0]:.5f}")
    assert ok


def test_criterion_7_conditional_lift(verdict):
    schema, train_t, _ = simulated(0)
    model = fit(schema, train_t, 0, mode="conditional")
    counts = Counter(train_t.column("C5"))
    rarest = sorted(schema["C5"].levels, key=lambda lv: (counts[lv], lv))[:3]
    base = Counter(generate(model, 10_000, seed=1).column("C5"))
    results, ok = [], True
    for level in rarest:
        cond = generate(model, 10_000, seed=2, condition={"C5": level}).column("C5")
        hit = sum(v == level for v in cond) / len(cond)
        marginal = base[level] / 10_000
        ok &= hit > marginal
        results.append(f"{level}: {hit:.4f} vs {marginal:.4f}")
    verdict(7, "conditional lift", ok, "conditional vs unconditional rate; " + ", ".join(results))
    assert ok


def _pipeline(d):
    sim, ckpt = d / "sim.csv", d / "m.ckpt"
    steps = [
        ["simulate", "--out", str(sim), "--rows", "3000", "--seed", "11"],
        ["fit", "--data", str(sim), "--checkpoint", str(ckpt), "--epochs", "5",
         "--batch-size", "500", "--seed", "11"],
        ["sample", "--checkpoint", str(ckpt), "--out", str(d / "syn.csv"), "--rows", "600",
         "--seed", "11"],
        ["evaluate", "--checkpoint", str(ckpt), "--data", str(sim), "--synthetic",
         str(d / "syn.csv"), "--report", str(d / "report.json"), "--summary",
         str(d / "summary.csv")],
    ]
    for argv in steps:
        assert main(argv) == 0
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(d.iterdir())}


def test_criterion_8_determinism(verdict, tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a, b = _pipeline(tmp_path / "a"), _pipeline(tmp_path / "b")
    differing = sorted(k for k in a if a[k] != b.get(k))
    ok = set(a) == set(b) and not differing and {"m.ckpt", "syn.csv", "report.json"} <= set(a)
    verdict(8, "determinism", ok,
            f"{len(a)} artifacts compared byte-for-byte, differing: {differing or 'none'}")
    assert ok
