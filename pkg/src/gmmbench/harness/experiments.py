"""The four sweeps: training size, SNR via a, observation dimension P, and train/test noise mismatch.

Each (sweep point, Monte-Carlo run) pair is an independent task that owns
its system matrix, data and fitted estimators; tasks may run in worker
processes and are merged back in (sweep index, run) order.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..estimators import fit, predict
from ..gmm_model import NoiseModel, make_prior, scale_for_snr, signal_power, snr_db
from ..metrics import NmseRecord, aggregate, nmse_db
from ..mmse_oracle import build_cache, mmse_estimate, oracle_nmse_db
from ..observation import draw_system, generate_dataset, split
from .config import ExperimentConfig
from .seeds import derive_seed

log = logging.getLogger(__name__)

BOUND = "mmse_bound"
TRAIN_MATCHED = "mmse_train_matched"
ORACLE_NAMES = (BOUND, TRAIN_MATCHED)
RUN_LEVEL = -1


@dataclass
class SweepResult:
    experiment: str
    sweep_name: str
    config: dict
    records: list

    def stats(self, domain: str = "db"):
        return aggregate(self.records, domain)

    def estimator_names(self):
        seen = []
        for r in self.records:
            if r.estimator not in seen:
                seen.append(r.estimator)
        return seen


@dataclass
class BoundViolation:
    sweep_value: float
    mc_run: int
    estimator: str
    estimator_db: float
    bound_db: float

    def __str__(self):
        return (f"{self.estimator} at {self.sweep_value:g} (run {self.mc_run}): "
                f"{self.estimator_db:.3f} dB beats the bound {self.bound_db:.3f} dB")


def base_prior(cfg: ExperimentConfig, a=None):
    prior = make_prior(cfg.Q, cfg.M, cfg.a if a is None else a, cfg.mean_layout, cfg.mean_seed)
    if cfg.train_snr_db is not None and a is None:
        prior = prior.with_scale(scale_for_snr(prior, cfg.b, cfg.train_snr_db))
    return prior


def _system_seed(cfg, run, sweep_index):
    idx = sweep_index if cfg.fresh_system_per_point else RUN_LEVEL
    return derive_seed(cfg.seed, run, idx, "system")


def _fit_all(cfg, train, run, sweep_index):
    fitted = []
    for spec in cfg.estimators:
        seed = derive_seed(cfg.seed, run, sweep_index, f"estimator:{spec.name}")
        fitted.append(fit(train, replace(spec, seed=seed)))
    return fitted


def _records(cfg, value, run, prior, noise, train_n, test, fitted, oracle):
    power = signal_power(prior)
    snr = snr_db(prior, noise)
    common = dict(sweep_name=cfg.sweep_name, sweep_value=float(value), mc_run=run, n_test=len(test),
                  signal_power=power, snr_db=snr, n_train=train_n, experiment=cfg.experiment)
    out = []
    for spec, est in zip(cfg.estimators, fitted):
        err = nmse_db(predict(est, test.observations), test.targets, power)
        out.append(NmseRecord(estimator=spec.name, nmse_db=err, **common))
    for name, err in oracle:
        out.append(NmseRecord(estimator=name, nmse_db=err, **common))
    return out


def _matched_task(cfg: ExperimentConfig, sweep_index: int, value: float, run: int):
    """One matched-statistics point: fresh data, 70:30 split, fit, evaluate."""
    P, n_total, a = cfg.P, cfg.n_total, None
    if cfg.experiment == "train_size_sweep":
        n_total = int(value)
    elif cfg.experiment == "dimension_p_sweep":
        P = int(value)
    elif cfg.experiment == "snr_a_sweep":
        a = float(value)
    prior = base_prior(cfg, a)
    noise = NoiseModel(cfg.b, P)
    system = draw_system(P, cfg.Q, _system_seed(cfg, run, sweep_index), cfg.h_variance)
    data = generate_dataset(prior, noise, system, n_total, derive_seed(cfg.seed, run, sweep_index, "data"))
    train, test = split(data, cfg.train_fraction, derive_seed(cfg.seed, run, sweep_index, "split"))
    fitted = _fit_all(cfg, train, run, sweep_index)
    bound = oracle_nmse_db(prior, noise, system, test)
    return _records(cfg, value, run, prior, noise, len(train), test, fitted, [(BOUND, bound)])


def _mismatch_task(cfg: ExperimentConfig, run: int):
    """Fit once on training-noise data, then score on a fresh test set per test noise power.

    Two oracle rows per point: the true bound (oracle knows the test noise)
    and the oracle built for the training noise.
    """
    prior = base_prior(cfg)
    train_noise = NoiseModel(cfg.b, cfg.P)
    system = draw_system(cfg.P, cfg.Q, derive_seed(cfg.seed, run, RUN_LEVEL, "system"), cfg.h_variance)
    data = generate_dataset(prior, train_noise, system, cfg.n_total, derive_seed(cfg.seed, run, RUN_LEVEL, "data"))
    train, _ = split(data, cfg.train_fraction, derive_seed(cfg.seed, run, RUN_LEVEL, "split"))
    n_test = cfg.n_total - len(train)
    fitted = _fit_all(cfg, train, run, RUN_LEVEL)
    train_cache = build_cache(prior, train_noise, system)
    power = signal_power(prior)

    out = []
    for i, b_test in enumerate(cfg.grid):
        noise = NoiseModel(b_test, cfg.P)
        test = generate_dataset(prior, noise, system, n_test, derive_seed(cfg.seed, run, i, "test"))
        bound = oracle_nmse_db(prior, noise, system, test)
        stale = nmse_db(mmse_estimate(train_cache, test.observations), test.targets, power)
        out.append((i, _records(cfg, b_test, run, prior, noise, len(train), test, fitted,
                                [(BOUND, bound), (TRAIN_MATCHED, stale)])))
    return out


def _run_task(args):
    kind, cfg, payload = args
    if kind == "matched":
        sweep_index, value, run = payload
        return [((sweep_index, run), _matched_task(cfg, sweep_index, value, run))]
    run = payload
    return [((i, run), recs) for i, recs in _mismatch_task(cfg, run)]


def run_experiment(cfg: ExperimentConfig) -> SweepResult:
    if cfg.experiment == "mismatch_b_sweep":
        tasks = [("mismatch", cfg, run) for run in range(cfg.mc_runs)]
    else:
        tasks = [("matched", cfg, (i, v, run)) for i, v in enumerate(cfg.grid) for run in range(cfg.mc_runs)]

    pieces = []
    if cfg.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.n_jobs) as pool:
            for out in pool.map(_run_task, tasks):
                pieces.extend(out)
    else:
        for n, task in enumerate(tasks, 1):
            pieces.extend(_run_task(task))
            log.info("%s: task %d/%d done", cfg.experiment, n, len(tasks))

    pieces.sort(key=lambda p: p[0])
    records = [r for _, recs in pieces for r in recs]
    return SweepResult(cfg.experiment, cfg.sweep_name, cfg.snapshot(), records)


def run_train_size_sweep(cfg: ExperimentConfig) -> SweepResult:
    return run_experiment(_as(cfg, "train_size_sweep"))


def run_snr_a_sweep(cfg: ExperimentConfig) -> SweepResult:
    return run_experiment(_as(cfg, "snr_a_sweep"))


def run_dimension_p_sweep(cfg: ExperimentConfig) -> SweepResult:
    return run_experiment(_as(cfg, "dimension_p_sweep"))


def run_mismatch_b_sweep(cfg: ExperimentConfig) -> SweepResult:
    return run_experiment(_as(cfg, "mismatch_b_sweep"))


def _as(cfg, experiment):
    if cfg.experiment != experiment:
        raise ValueError(f"config is for {cfg.experiment}, not {experiment}")
    return cfg


def audit_bound(records, slack_db: float = 0.2):
    """Rows where an estimator beats the matched MMSE bound by more than ``slack_db``."""
    bounds = {(r.sweep_value, r.mc_run): r.nmse_db for r in records if r.estimator == BOUND}
    bad = []
    for r in records:
        if r.estimator in ORACLE_NAMES:
            continue
        bound = bounds.get((r.sweep_value, r.mc_run))
        if bound is None:
            raise ValueError(f"no {BOUND} record for sweep value {r.sweep_value}, run {r.mc_run}")
        if bound > r.nmse_db + slack_db:
            bad.append(BoundViolation(r.sweep_value, r.mc_run, r.estimator, r.nmse_db, bound))
    return bad


def expected_record_count(cfg: ExperimentConfig) -> int:
    oracles = 2 if cfg.experiment == "mismatch_b_sweep" else 1
    return len(cfg.grid) * cfg.mc_runs * (len(cfg.estimators) + oracles)


def averaged_curves(result: SweepResult, domain: str = "db"):
    """{name: (sweep values, mean nmse_db, std)} ordered by sweep value."""
    stats = result.stats(domain)
    curves = {}
    for name in result.estimator_names():
        rows = sorted((s for s in stats if s.estimator == name), key=lambda s: s.sweep_value)
        curves[name] = (np.array([s.sweep_value for s in rows]),
                        np.array([s.mean for s in rows]),
                        np.array([s.std for s in rows]))
    return curves
