import pytest

from vitalpolicy.config import default_config
from vitalpolicy.ingest import ObservationWindow, PatientMeta
from vitalpolicy.pipeline import label_cohort, load_dataset_dir
from vitalpolicy.simulator import simulate, write_simulation


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture(scope="session")
def small_sim(tmp_path_factory, cfg):
    """A small but complete simulated dataset shared across test modules."""
    from dataclasses import replace

    out = tmp_path_factory.mktemp("smallsim")
    sim = replace(cfg.simulator, n_patients=8, hours_mean=60, hours_jitter=15, seed=42)
    result = simulate(sim, cfg.registry, cfg.knobs)
    write_simulation(result, out)
    cohort = load_dataset_dir(out, cfg)
    dataset, stats = label_cohort(cohort, cfg)
    return {"dir": out, "result": result, "cohort": cohort, "dataset": dataset, "stats": stats}


@pytest.fixture(scope="session")
def small_artifact(small_sim, cfg):
    """Boosted-trees policy trained on the full small dataset."""
    from vitalpolicy.learners import ClassifierBackendSpec
    from vitalpolicy.policy import train_policy

    spec = ClassifierBackendSpec("boosted_trees", {}, seed=5)
    return train_policy(small_sim["dataset"].samples, spec, cfg.knobs, fold_id="full")


def make_windows(pid, series, ecmo_type="VA", on_ecmo=True):
    """Build contiguous ObservationWindows from {var: [v0, v1, ...]} series."""
    hours = max(len(v) for v in series.values())
    out = []
    for t in range(hours):
        means = {var: vals[t] for var, vals in series.items() if t < len(vals) and vals[t] is not None}
        out.append(ObservationWindow(pid, t, means, {v: 1 for v in means}, ecmo_type, on_ecmo))
    return out


def meta_for(pid, age=5.0, ecmo_type="VA", end_min=10_000):
    return PatientMeta(pid, age, ecmo_type, 0, end_min)
