"""Acceptance gate: one test per primary criterion, at stated tolerances.

Each test prints a single PASS line when its criterion holds; run with
`pytest tests/test_acceptance.py -v -s` to see them stream.
"""
import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from vitalpolicy.cli import main as main_cli
from vitalpolicy.config import default_config
from vitalpolicy.disagreement import mine_regions, split_frequency
from vitalpolicy.evaluation import (
    balanced_accuracy,
    confusion_matrix,
    ece,
    macro_prf,
    run_evaluation,
    train_fold_artifact,
)
from vitalpolicy.labeler import ActionLabel
from vitalpolicy.learners import ClassifierBackendSpec
from vitalpolicy.learners.gradcheck import numeric_gradient_check
from vitalpolicy.learners.tree import fit_regression_tree
from vitalpolicy.pipeline import label_cohort, load_dataset_dir
from vitalpolicy.policy import KnobHead, artifact_bytes, predict_action_batch, tune_tau
from vitalpolicy.simulator import default_rules, simulate, write_simulation

from test_evaluation import oracle_balanced_accuracy, oracle_ece, oracle_macro_prf
from test_policy import StubModel, oracle_tau

CFG = default_config()


def report(name):
    print(f"\nACCEPTANCE {name}: PASS")


# ---------------------------------------------------------------------------
# criterion 1: label-oracle exactness


def test_label_oracle_exactness(tmp_path):
    start = time.time()
    sim = replace(CFG.simulator, n_patients=50, hours_mean=90, hours_jitter=30,
                  label_noise=0.0, seed=2024)
    result = simulate(sim, CFG.registry, CFG.knobs)
    write_simulation(result, tmp_path)
    cohort = load_dataset_dir(tmp_path, CFG)
    dataset, _ = label_cohort(cohort, CFG)
    recovered = {
        (s.patient_id, s.hour_index, k, lab.value)
        for s in dataset.samples
        for k, lab in s.actions.items()
        if lab != ActionLabel.SAME
    }
    truth = set(result.actions)
    elapsed = time.time() - start
    assert len(truth) > 200, "oracle run should contain substantial action traffic"
    assert recovered == truth, (
        f"{len(truth - recovered)} missed, {len(recovered - truth)} spurious")
    assert elapsed < 10.0, f"label-oracle run took {elapsed:.1f}s (budget 10s)"
    report(f"label-oracle exactness ({len(truth)} actions, {elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# criterion 2: policy recovery + runtime

BACKENDS = ["logistic", "boosted_trees", "mlp"]


def _best_backend(run):
    def mean_bal(b):
        return np.mean([v[0] for v in b.summary.per_knob_balanced_accuracy.values()])

    return max(run.backends, key=mean_bal)


@pytest.fixture(scope="module")
def deterministic_loo(tmp_path_factory):
    out = tmp_path_factory.mktemp("det")
    result = simulate(CFG.simulator, CFG.registry, CFG.knobs)
    write_simulation(result, out)
    cohort = load_dataset_dir(out, CFG)
    specs = [ClassifierBackendSpec(k, {}, 0) for k in BACKENDS]
    start = time.time()
    run = run_evaluation(cohort, specs, CFG.knobs, CFG.registry, CFG.age_table)
    return run, time.time() - start


def test_policy_recovery_deterministic(deterministic_loo):
    run, elapsed = deterministic_loo
    assert elapsed < 300.0, f"full LOO over 3 backends took {elapsed:.0f}s (budget 300s)"
    best = _best_backend(run)
    bal = {k: v[0] for k, v in best.summary.per_knob_balanced_accuracy.items()}
    mf1 = {k: v[0] for k, v in best.summary.per_knob_macro_f1.items()}
    for k in run.knob_names:
        assert bal[k] >= 0.95, f"{best.name} balanced accuracy on {k}: {bal[k]:.3f} < 0.95"
        assert mf1[k] >= 0.90, f"{best.name} macro-F1 on {k}: {mf1[k]:.3f} < 0.90"
    report(
        "policy recovery, deterministic clinician "
        f"(best={best.name}, bal>={min(bal.values()):.3f}, f1>={min(mf1.values()):.3f}, "
        f"LOO {elapsed:.0f}s)"
    )


def test_policy_recovery_with_noise(tmp_path):
    sim = replace(CFG.simulator, rules=default_rules(0.7), label_noise=0.002, seed=11)
    result = simulate(sim, CFG.registry, CFG.knobs)
    write_simulation(result, tmp_path)
    cohort = load_dataset_dir(tmp_path, CFG)
    specs = [ClassifierBackendSpec(k, {}, 0) for k in BACKENDS]
    run = run_evaluation(cohort, specs, CFG.knobs, CFG.registry, CFG.age_table)
    best = _best_backend(run)
    bal = {k: v[0] for k, v in best.summary.per_knob_balanced_accuracy.items()}
    for k in run.knob_names:
        assert bal[k] >= 0.80, f"{best.name} balanced accuracy on {k}: {bal[k]:.3f} < 0.80"
    report(f"policy recovery, fire 0.7 + mild noise (best={best.name}, "
           f"bal>={min(bal.values()):.3f})")


# ---------------------------------------------------------------------------
# criterion 3: metric oracles


def test_metric_oracles():
    S, I, D = ActionLabel.SAME, ActionLabel.INCREASE, ActionLabel.DECREASE
    labels = [S, I, D]
    rng = np.random.default_rng(99)
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        truth = [labels[i] for i in rng.integers(0, 3, n)]
        pred = [labels[i] for i in rng.integers(0, 3, n)]
        cm = confusion_matrix(truth, pred)
        assert abs(balanced_accuracy(cm) - oracle_balanced_accuracy(truth, pred)) <= 1e-12
        got = macro_prf(cm)
        want = oracle_macro_prf(truth, pred)
        for g, w in zip(got, want):
            assert abs(g - w) <= 1e-12
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        records = [(float(c), bool(b < 0.4)) for c, b in zip(rng.random(n), rng.random(n))]
        assert abs(ece(records) - oracle_ece(records)) <= 1e-12
    # worked examples
    cm = confusion_matrix([S, S, I], [S, I, I])
    assert abs(macro_prf(cm)[2] - 2.0 / 3.0) <= 1e-12
    assert ece([(0.95, True), (0.95, False)]) == pytest.approx(0.45, abs=2e-16)
    report("metric oracles (1000 random instances each, tol 1e-12)")


# ---------------------------------------------------------------------------
# criterion 4: merge-law invariants


def test_merge_law_invariants():
    rng = np.random.default_rng(7)
    total = 0
    for _ in range(100):
        n = 1000
        p_c = rng.uniform(1e-6, 1 - 1e-6, n)
        p_d = rng.uniform(1e-6, 1 - 1e-6, n)
        tau = float(rng.uniform(0.01, 0.99))

        class Preset:
            def __init__(self, vals):
                self.vals = vals
                self.feature_count = 1

            def predict_proba(self, X):
                return self.vals

        head = KnobHead("k", Preset(p_c), Preset(p_d), tau)
        labels, dist, pc = predict_action_batch(head, np.zeros((n, 1)))
        sums = dist.sum(axis=1)
        assert np.all(np.abs(sums - 1.0) <= 1e-9)
        assert np.all(dist >= 0.0) and np.all(dist <= 1.0)
        for lab, p in zip(labels, p_c):
            if p <= tau:
                assert lab == ActionLabel.SAME
        total += n
    assert total == 100_000
    report("merge-law invariants (100000 head outputs, 0 violations)")


# ---------------------------------------------------------------------------
# criterion 5: gradient checks


def test_gradient_checks_fifty_seeds():
    rng = np.random.default_rng(123)
    worst = 0.0
    for seed in range(50):
        n = int(rng.integers(5, 21))
        d = int(rng.integers(2, 11))
        X = rng.normal(size=(n, d))
        y = (rng.random(n) > 0.5).astype(float)
        if y.min() == y.max():
            y[0] = 1.0 - y[0]
        for spec in (ClassifierBackendSpec("logistic", {}, seed),
                     ClassifierBackendSpec("mlp", {"hidden_width": 8}, seed)):
            err = numeric_gradient_check(spec, X, y)
            worst = max(worst, err)
            assert err < 1e-4, f"{spec.kind} seed {seed}: relative error {err:.2e}"
    report(f"gradient checks (50 seeds x 2 backends, worst {worst:.2e} < 1e-4)")


# ---------------------------------------------------------------------------
# criterion 6: tau grid-search optimality


def test_tau_grid_search_optimality():
    rng = np.random.default_rng(55)
    for _ in range(200):
        n = int(rng.integers(2, 80))
        probs = rng.random(n)
        c = rng.random(n) < rng.uniform(0.05, 0.6)
        got = tune_tau(StubModel(), probs[:, None], c)
        assert got == oracle_tau(probs, c)
    report("tau grid-search optimality (200 random sets, exact)")


# ---------------------------------------------------------------------------
# criterion 7: disagreement recovery


def test_disagreement_recovery():
    names = CFG.registry.feature_names()
    i_fio2 = names.index("FiO2")
    i_dfio2 = names.index("ΔFiO2")
    rng = np.random.default_rng(31)
    X = rng.normal(50.0, 10.0, size=(4000, len(names)))
    X[:, i_fio2] = rng.uniform(20.0, 60.0, 4000)
    X[:, i_dfio2] = rng.uniform(-20.0, 20.0, 4000)
    inside = (X[:, i_fio2] > 36.0) & (X[:, i_dfio2] <= 13.0)
    d = np.where(inside, 0.5, 0.0)

    regions, tree = mine_regions(X, d, names, "FiO2", max_depth=3, min_leaf=20)
    top = regions[0]
    got_features = {p.feature for p in top.predicates}
    assert got_features == {"FiO2", "ΔFiO2"}, got_features
    # thresholds within one split-grid step: candidate thresholds are
    # midpoints of adjacent samples, so the worst-case step is the largest gap
    fio2_sorted = np.sort(X[:, i_fio2])
    dfio2_sorted = np.sort(X[:, i_dfio2])
    step_fio2 = float(np.max(np.diff(fio2_sorted)))
    step_dfio2 = float(np.max(np.diff(dfio2_sorted)))
    for p in top.predicates:
        if p.feature == "FiO2":
            assert abs(p.lower - 36.0) <= max(step_fio2, 0.05)
        else:
            assert abs(p.upper - 13.0) <= max(step_dfio2, 0.05)
    assert top.mean_d == pytest.approx(0.5, abs=1e-12)
    assert top.n == int(inside.sum())
    rendered = top.render()
    assert "(n=" in rendered and "d(s)=" in rendered

    # split-frequency counts against a brute-force node walk
    def walk(node, acc):
        if node.is_leaf:
            return
        acc.append(node.feature)
        walk(node.left, acc)
        walk(node.right, acc)

    second = fit_regression_tree(X, np.where(X[:, i_fio2] > 40.0, 0.3, 0.0),
                                 max_depth=2, min_leaf=20)
    trees = {("model", "FiO2"): tree, ("model", "PO2"): second}
    _, rows = split_frequency(trees, names)
    counts = {feature: c["model"] for feature, c in rows}
    brute = {}
    for t in trees.values():
        acc = []
        walk(t.root, acc)
        for f in acc:
            brute[names[f]] = brute.get(names[f], 0) + 1
    assert counts == brute
    report(f"disagreement recovery (top region: {rendered})")


# ---------------------------------------------------------------------------
# criterion 8: no test leakage


def test_no_leakage(small_sim):
    import copy

    cohort = small_sim["cohort"]
    held_out = cohort.patient_ids[2]
    mutated = copy.deepcopy(cohort)
    rng = np.random.default_rng(17)
    for w in mutated.patients[held_out].windows:
        w.means = {k: v + float(rng.normal(0, 5)) for k, v in w.means.items()}
    for kind in BACKENDS:
        spec = ClassifierBackendSpec(kind, {"epochs": 20} if kind == "mlp" else {}, 8)
        before = artifact_bytes(train_fold_artifact(
            cohort, held_out, spec, CFG.knobs, CFG.registry, CFG.age_table))
        after = artifact_bytes(train_fold_artifact(
            mutated, held_out, spec, CFG.knobs, CFG.registry, CFG.age_table))
        assert before == after, f"{kind}: training-fold artifact changed"
    report("no-leakage (held-out perturbation, 3 backends, identical bytes)")


# ---------------------------------------------------------------------------
# criterion 9: reproducibility of the full CLI pipeline


REPRO_CONFIG = """\
simulator:
  n_patients: 5
  hours_mean: 40
  hours_jitter: 8
  seed: 13
backends:
  mlp:
    epochs: 40
"""


def _run_pipeline(root: Path, cfg_path: Path):
    runner = CliRunner()
    sim = root / "sim"
    lab = root / "label"
    ev = root / "eval"
    for args in (
        ["--config", str(cfg_path), "--seed", "4", "--out", str(sim), "simulate"],
        ["--config", str(cfg_path), "--seed", "4", "--out", str(lab),
         "label", "--data", str(sim)],
        ["--config", str(cfg_path), "--seed", "4", "--out", str(ev),
         "evaluate", "--data", str(sim)],
    ):
        r = runner.invoke(main_cli, args)
        assert r.exit_code == 0, r.output
    files = {}
    for base in (sim, lab, ev):
        for p in sorted(base.rglob("*")):
            if p.is_file() and p.name != "manifest.json":
                files[str(p.relative_to(root))] = p.read_bytes()
    return files


def test_reproducibility(tmp_path):
    cfg_path = tmp_path / "config.yaml"
    cfg_path.write_text(REPRO_CONFIG)
    first = _run_pipeline(tmp_path / "run1", cfg_path)
    second = _run_pipeline(tmp_path / "run2", cfg_path)
    assert first.keys() == second.keys()
    diffs = [name for name in first if first[name] != second[name]]
    assert not diffs, f"non-deterministic outputs: {diffs}"
    report(f"reproducibility ({len(first)} files byte-identical, manifests excluded)")


# ---------------------------------------------------------------------------
# criterion 10: serve parity


def test_serve_parity(small_artifact, cfg):
    from fastapi.testclient import TestClient

    from vitalpolicy.policy import predict_all
    from vitalpolicy.service import create_app

    client = TestClient(create_app(small_artifact, cfg))
    names = small_artifact.feature_names
    rng = np.random.default_rng(2718)
    worst = 0.0
    for _ in range(100):
        x = rng.normal(40.0, 25.0, size=len(names))
        body = client.post("/predict", json={"features": dict(zip(names, x))}).json()
        lib = predict_all(small_artifact, x)
        for knob, (label, dist) in lib.items():
            got = body["per_knob"][knob]
            assert got["action"] == label.value
            for key, want in (("p_same", dist.p_same), ("p_increase", dist.p_increase),
                              ("p_decrease", dist.p_decrease)):
                worst = max(worst, abs(got[key] - want))
                assert abs(got[key] - want) <= 1e-9
    r = client.post("/predict", json={"features": {names[0]: 1.0}})
    assert 400 <= r.status_code < 500
    missing = r.json()["detail"]["missing"]
    assert sorted(missing) == sorted(names[1:])
    report(f"serve parity (100 vectors, worst abs diff {worst:.1e}; 4xx names missing)")
