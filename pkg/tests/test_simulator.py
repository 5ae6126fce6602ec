import numpy as np
import pytest
from scipy import stats as sps

from jobpar import kernels
from jobpar.model import Erlang, Exponential, SystemConfig, SystemState
from jobpar.simulator import (SnapshotPlan, UnsupportedLawError, batch_means_ci, ccdf_from_queue_lengths,
                              replica_queue_lengths, run_ctmc, run_uniformized, run_workload,
                              transient_ccdf)
from oracles import mm1_mean


def test_snapshot_plan():
    p = SnapshotPlan(2.0, 3, 0.5)
    assert list(p.times()) == [2.0, 2.5, 3.0]
    SnapshotPlan(1.0, 1, 0.0)
    for bad in [(-1, 2, 1), (0, 0, 1), (0, 2, 0), (0, 2, -1)]:
        with pytest.raises(ValueError):
            SnapshotPlan(*bad)
    d = SnapshotPlan.default(0.9, 10)
    assert d.warmup == pytest.approx(100) and d.spacing == pytest.approx(50)


def test_batch_means_ci():
    rng = np.random.default_rng(0)
    hw = [batch_means_ci(rng.normal(size=400), 20) for _ in range(300)]
    # half-width of a 95% interval for the mean of 400 iid N(0,1)
    assert np.mean(hw) == pytest.approx(1.96 / 20, rel=0.1)
    assert np.isnan(batch_means_ci([1.0]))


@pytest.mark.parametrize("run", [run_ctmc, run_uniformized, run_workload])
def test_same_seed_same_result(run):
    cfg = SystemConfig(30, 2, 0.6, seed=4)
    plan = SnapshotPlan(5, 20, 1)
    a, b = run(cfg, plan), run(cfg, plan)
    assert np.array_equal(a.queue_lengths, b.queue_lengths)
    c = run(SystemConfig(30, 2, 0.6, seed=5), plan)
    assert not np.array_equal(a.queue_lengths, c.queue_lengths)


@pytest.mark.skipif("cython" not in kernels.BACKENDS, reason="compiled backend not built")
def test_python_fallback_matches_compiled():
    cfg = SystemConfig(20, 3, 0.7, seed=2)
    plan = SnapshotPlan(3, 10, 1)
    a = run_ctmc(cfg, plan, backend="python")
    b = run_ctmc(cfg, plan, backend="cython")
    assert np.array_equal(a.queue_lengths, b.queue_lengths) and a.events == b.events


def test_stats_fields():
    st = run_ctmc(SystemConfig(40, 2, 0.5, seed=1), SnapshotPlan(20, 50, 2))
    assert st.queue_lengths.shape == (50, 40)
    assert st.empirical_cdf[-1] == 1.0 and np.all(np.diff(st.empirical_cdf) >= 0)
    assert 0.3 < st.busy_fraction < 0.7
    assert st.mean_ci_halfwidth > 0
    # Little's law: jobs in system = arrival rate * sojourn
    assert st.mean_jobs == pytest.approx(st.arrival_rate * st.mean_sojourn, rel=0.1)
    assert len(st.snapshots) == 50 and st.snapshots[0].time == 20
    assert st.final_state().total_jobs == len(st.final_jobs)


def test_exponential_only_engines():
    cfg = SystemConfig(10, 2, 0.5, service_law=Erlang(2))
    with pytest.raises(UnsupportedLawError):
        run_ctmc(cfg, SnapshotPlan(1, 1, 0))
    with pytest.raises(UnsupportedLawError):
        run_uniformized(cfg, SnapshotPlan(1, 1, 0))
    run_workload(cfg, SnapshotPlan(1, 1, 0))


def test_exponential_mean_rescales_time():
    # mean-2 service at lam = 0.4 is the unit-mean system at load 0.8 on a doubled clock
    slow = run_ctmc(SystemConfig(200, 1, 0.4, service_law=Exponential(2.0), seed=3),
                    SnapshotPlan(100, 400, 10))
    assert slow.mean == pytest.approx(mm1_mean(0.8), rel=0.08)


def test_initial_state_and_work():
    init = SystemState.from_jobs(10, [(0, 1), (2, 3), (2, 3)])
    cfg = SystemConfig(10, 2, 0.0, seed=1)
    st = run_ctmc(cfg, SnapshotPlan(0, 1, 0), initial=init)
    assert list(st.queue_lengths[0]) == list(init.queue_lengths)
    with pytest.raises(ValueError):
        run_workload(cfg, SnapshotPlan(0, 1, 0), initial=init, initial_work=[1.0])
    # work 0.5 on a job alone at two unit servers finishes at t = 0.25
    st = run_workload(cfg, SnapshotPlan(0.2, 2, 0.1), initial=SystemState.from_jobs(10, [(0, 1)]),
                      initial_work=[0.5])
    assert st.queue_lengths[0].sum() == 2 and st.queue_lengths[1].sum() == 0


def test_d1_queue_length_law():
    st = run_ctmc(SystemConfig(100, 1, 0.5, seed=8), SnapshotPlan(50, 400, 10))
    geo = 1 - 0.5 ** np.arange(1, 8)
    assert np.max(np.abs(st.cdf(7) - geo)) < 0.02


def test_engines_agree_small():
    cfg = SystemConfig(60, 2, 0.5, seed=11)
    plan = SnapshotPlan(20, 200, 10)
    a = run_ctmc(cfg, plan).samples
    b = run_uniformized(SystemConfig(60, 2, 0.5, seed=12), plan).samples
    c = run_workload(SystemConfig(60, 2, 0.5, seed=13), plan).samples
    assert sps.ks_2samp(a, b).pvalue > 0.001
    assert sps.ks_2samp(a, c).pvalue > 0.001


def test_replicas_and_threads():
    cfg = SystemConfig(20, 2, 0.6, seed=3)
    times = [0.0, 1.0, 5.0]
    one = replica_queue_lengths(cfg, times, 6)
    many = replica_queue_lengths(cfg, times, 6, threads=3)
    assert one.shape == (6, 3, 20) and np.array_equal(one, many)
    assert one[:, 0].sum() == 0
    with pytest.raises(ValueError):
        replica_queue_lengths(cfg, [2.0, 1.0], 2)
    ccdf = transient_ccdf(cfg, times, 6, levels=3)
    assert ccdf.shape == (3, 3) and np.all(ccdf[:, 0] == 1.0)
    assert list(ccdf_from_queue_lengths(np.array([0, 1, 2, 2]), 4)) == [1.0, 0.75, 0.5, 0.0]
