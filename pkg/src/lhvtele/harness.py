"""Monte Carlo verification runs and their reports.

Sessions are processed in fixed chunks of ``CHUNK`` consecutive session
indices; session ``i`` always uses ``derive_seed(master_seed, i)``.  Chunk
results are reduced in chunk order, so a report depends only on the
configuration, never on the number of worker processes (set with the
``LHVTELE_WORKERS`` environment variable).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, coding, cost, lhv, protocol
from .geometry import as_unit, dot, normalize

CHUNK = 1 << 16
WORKERS_ENV = "LHVTELE_WORKERS"
MODES = ("vn", "singlet", "povm", "entropy", "coding", "fidelity")

DEFAULT_A = (0.0, 0.0, 1.0)
DEFAULT_B = (0.8, 0.0, 0.6)


class UsageError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str = "vn"
    master_seed: int = 0
    trials: int = 100_000
    a: tuple | None = None
    b: tuple | None = None
    povm_file: str | None = None
    tolerance_sigmas: float = 4.0
    output_format: str = "json"
    budget: float = 2.0
    povm: protocol.Povm | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise UsageError(f"unknown mode {self.mode!r}")
        if self.trials < 1:
            raise UsageError("trials must be >= 1")
        if self.output_format not in ("json", "csv"):
            raise UsageError(f"unknown output format {self.output_format!r}")
        if self.tolerance_sigmas <= 0:
            raise UsageError("tolerance_sigmas must be positive")
        for name in ("a", "b"):
            v = getattr(self, name)
            if v is not None:
                try:
                    setattr(self, name, tuple(float(x) for x in normalize(v)))
                except ValueError as exc:
                    raise UsageError(f"bad vector {name}: {exc}") from exc

    @property
    def state(self) -> np.ndarray:
        return as_unit(self.a if self.a is not None else DEFAULT_A)

    @property
    def measurement(self) -> np.ndarray:
        return as_unit(self.b if self.b is not None else DEFAULT_B)


@dataclass
class Check:
    name: str
    value: float
    target: float
    deviation: float
    threshold: float
    tolerance: str
    passed: bool


def sigma_check(name, value, target, se, sigmas) -> Check:
    """Deviation in standard errors; a zero standard error demands equality."""
    diff = abs(value - target)
    if se > 0:
        dev = diff / se
    else:
        dev = 0.0 if diff <= 1e-12 else math.inf
    return Check(name, float(value), float(target), float(dev), float(sigmas),
                 f"{sigmas:g} standard errors", bool(dev < sigmas or dev == 0.0))


def abs_check(name, value, target, tol) -> Check:
    dev = abs(value - target)
    return Check(name, float(value), float(target), float(dev), float(tol), f"absolute {tol:g}", bool(dev <= tol))


@dataclass
class StatsReport:
    mode: str
    trials: int
    counts: dict = field(default_factory=dict)
    frequencies: dict = field(default_factory=dict)
    targets: dict = field(default_factory=dict)
    standard_errors: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def first_failure(self) -> str | None:
        return next((c.name for c in self.checks if not c.passed), None)

    @property
    def max_deviation_sigmas(self) -> float:
        devs = [c.deviation for c in self.checks if c.tolerance.endswith("standard errors")]
        return max(devs, default=0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = "pass" if self.passed else "fail"
        d["first_failure"] = self.first_failure
        d["max_deviation_sigmas"] = self.max_deviation_sigmas
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "name", "value", "target", "deviation", "threshold", "passed"])
        for key, count in self.counts.items():
            w.writerow(["outcome", key, self.frequencies.get(key, ""), self.targets.get(key, ""),
                        "", "", count])
        for c in self.checks:
            w.writerow(["check", c.name, c.value, c.target, c.deviation, c.threshold, c.passed])
        return buf.getvalue()


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x)}")


def metadata(config: ExperimentConfig) -> dict:
    return {
        "seed": config.master_seed,
        "generator": lhv.GENERATOR,
        "version": __version__,
        "chunk": CHUNK,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


# -- chunked execution ------------------------------------------------------------


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _chunks(trials: int):
    return [(s, min(CHUNK, trials - s)) for s in range(0, trials, CHUNK)]


def run_chunked(fn, master_seed: int, trials: int, *args) -> list:
    """Apply ``fn(seeds, *args)`` to every chunk; results in chunk order."""
    jobs = _chunks(trials)
    workers = min(worker_count(), len(jobs))
    if workers == 1:
        return [fn(lhv.session_seeds(master_seed, s, n), *args) for s, n in jobs]
    with ProcessPoolExecutor(workers) as pool:
        futures = [pool.submit(_chunk_job, fn, master_seed, s, n, args) for s, n in jobs]
        return [f.result() for f in futures]


def _chunk_job(fn, master_seed, start, count, args):
    return fn(lhv.session_seeds(master_seed, start, count), *args)


def _reduce(parts: list[dict]) -> dict:
    out = {}
    for part in parts:
        for key, val in part.items():
            out[key] = out.get(key, 0) + val
    return out


def _vn_chunk(seeds, a, b):
    outcomes, msgs = protocol.simulate_vn(a, b, seeds)
    bits = cost.codelength_batch(msgs, seeds)
    return {"plus": int(np.sum(outcomes > 0)), "ideal_bits": float(bits.sum()),
            "ideal_bits_sq": float(np.sum(bits**2)), "k": int(msgs.k.sum())}


def _singlet_chunk(seeds, a, b):
    alpha, beta, msgs = protocol.simulate_singlet(a, b, seeds)
    bits = cost.codelength_batch(msgs, seeds)
    return {"alpha_plus": int(np.sum(alpha > 0)), "beta_plus": int(np.sum(beta > 0)),
            "product_sum": int(np.sum(alpha.astype(np.int64) * beta)),
            "ideal_bits": float(bits.sum()), "ideal_bits_sq": float(np.sum(bits**2))}


def _povm_chunk(seeds, a, vectors):
    batch = protocol.simulate_povm(a, protocol.Povm(vectors), seeds)
    bits = np.zeros(len(seeds))
    for msgs in batch.rounds:
        np.add.at(bits, msgs.index, cost.codelength_batch(msgs, seeds))
    # naive accounting: coded zone bits + 1 sign bit + 1 reply bit per round
    total = bits + 2.0 * batch.iterations
    out = {f"j{j}": int(np.sum(batch.outcome == j)) for j in range(len(vectors))}
    out.update(iterations=int(batch.iterations.sum()), iterations_sq=int(np.sum(batch.iterations**2)),
               total_bits=float(total.sum()), total_bits_sq=float(np.sum(total**2)))
    return out


def _mean_se(total, total_sq, n):
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0)
    return mean, math.sqrt(var / n)


# -- experiments --------------------------------------------------------------------


def verify_vn(config: ExperimentConfig) -> StatsReport:
    """Frequency of outcome +1 against (1 + a.b) / 2."""
    a, b = config.state, config.measurement
    n = config.trials
    r = _reduce(run_chunked(_vn_chunk, config.master_seed, n, a, b))
    p = 0.5 * (1.0 + dot(a, b))
    freq = r["plus"] / n
    se = math.sqrt(p * (1 - p) / n)
    bits, bits_se = _mean_se(r["ideal_bits"], r["ideal_bits_sq"], n)
    return StatsReport(
        mode="vn", trials=n,
        counts={"+1": r["plus"], "-1": n - r["plus"]},
        frequencies={"+1": freq, "-1": 1 - freq},
        targets={"+1": p, "-1": 1 - p},
        standard_errors={"+1": se, "-1": se},
        checks=[sigma_check("frequency(+1)", freq, p, se, config.tolerance_sigmas)],
        extra={"a": a.tolist(), "b": b.tolist(), "mean_k": r["k"] / n,
               "mean_ideal_bits": bits, "mean_ideal_bits_se": bits_se},
        metadata=metadata(config),
    )


def verify_singlet(config: ExperimentConfig) -> StatsReport:
    """Correlator against -a.b, marginals against 1/2, ideal bits against H."""
    a, b = config.state, config.measurement
    n, k = config.trials, config.tolerance_sigmas
    r = _reduce(run_chunked(_singlet_chunk, config.master_seed, n, a, b))
    ab = dot(a, b)
    corr = r["product_sum"] / n
    corr_se = math.sqrt(max(1.0 - ab * ab, 0.0) / n)
    fa, fb = r["alpha_plus"] / n, r["beta_plus"] / n
    half_se = 0.5 / math.sqrt(n)
    bits, bits_se = _mean_se(r["ideal_bits"], r["ideal_bits_sq"], n)
    h = cost.entropy_report().H
    bits_tol = max(0.01, k * bits_se)
    return StatsReport(
        mode="singlet", trials=n,
        counts={"alpha=+1": r["alpha_plus"], "beta=+1": r["beta_plus"]},
        frequencies={"alpha=+1": fa, "beta=+1": fb},
        targets={"alpha=+1": 0.5, "beta=+1": 0.5, "E(alpha*beta)": -ab},
        standard_errors={"alpha=+1": half_se, "beta=+1": half_se, "E(alpha*beta)": corr_se},
        checks=[
            sigma_check("E(alpha*beta)", corr, -ab, corr_se, k),
            sigma_check("frequency(alpha=+1)", fa, 0.5, half_se, k),
            sigma_check("frequency(beta=+1)", fb, 0.5, half_se, k),
            abs_check("mean ideal bits vs H", bits, h, bits_tol),
        ],
        extra={"a": a.tolist(), "b": b.tolist(), "mean_ideal_bits": bits, "mean_ideal_bits_se": bits_se},
        metadata=metadata(config),
    )


def _config_povm(config: ExperimentConfig) -> protocol.Povm:
    if config.povm is not None:
        protocol.validate_povm(config.povm)
        return config.povm
    if config.povm_file is None:
        raise UsageError("povm mode needs a POVM file")
    return protocol.load_povm(config.povm_file)


def verify_povm(config: ExperimentConfig) -> StatsReport:
    """Element frequencies, mean number of rounds and mean transmitted bits."""
    povm = _config_povm(config)
    a = config.state
    n, k = config.trials, config.tolerance_sigmas
    r = _reduce(run_chunked(_povm_chunk, config.master_seed, n, a, povm.vectors))
    target = povm.probabilities(a)
    counts, freqs, targets, ses, checks = {}, {}, {}, {}, []
    for j, q in enumerate(target):
        key = f"j={j}"
        counts[key] = r[f"j{j}"]
        freqs[key] = r[f"j{j}"] / n
        targets[key] = float(q)
        ses[key] = math.sqrt(max(q * (1 - q), 0.0) / n)
        checks.append(sigma_check(f"frequency({key})", freqs[key], q, ses[key], k))
    iters = r["iterations"] / n
    iters_se = math.sqrt(2.0 / n)  # geometric with success 1/2 has variance 2
    checks.append(sigma_check("mean iterations", iters, 2.0, iters_se, k))
    bits, bits_se = _mean_se(r["total_bits"], r["total_bits_sq"], n)
    report = cost.entropy_report()
    return StatsReport(
        mode="povm", trials=n, counts=counts, frequencies=freqs, targets=targets,
        standard_errors=ses, checks=checks,
        extra={"a": a.tolist(), "povm": povm.vectors.tolist(), "mean_iterations": iters,
               "expected_total_bits": report.total_povm,
               "simulated_total_bits": bits, "simulated_total_bits_se": bits_se},
        metadata=metadata(config),
    )


def sweep_vn(master_seed: int, pairs: int, trials: int, sigmas: float, min_pass: int) -> StatsReport:
    """Von Neumann check for ``pairs`` random (a, b) pairs."""
    rng = np.random.default_rng(master_seed)
    checks, devs = [], []
    for i in range(pairs):
        a, b = (as_unit(v / np.linalg.norm(v)) for v in rng.standard_normal((2, 3)))
        cfg = ExperimentConfig(mode="vn", master_seed=lhv.derive_seed(master_seed, i), trials=trials,
                               a=tuple(a), b=tuple(b), tolerance_sigmas=sigmas)
        rep = verify_vn(cfg)
        devs.append(rep.checks[0].deviation)
    within = sum(d < sigmas for d in devs)
    checks.append(Check(f"pairs within {sigmas:g} standard errors", within, min_pass, float(pairs - within),
                        float(pairs - min_pass), f"at least {min_pass} of {pairs}", within >= min_pass))
    return StatsReport(mode="vn-sweep", trials=trials, checks=checks, extra={"deviations_sigmas": devs},
                       metadata=metadata(ExperimentConfig(master_seed=master_seed)))


def verify_entropy(config: ExperimentConfig) -> tuple[cost.EntropyReport, StatsReport]:
    """Entropy accounting with its internal consistency checks.

    Comparisons with the published figures are listed under ``extra`` and do
    not affect the verdict.
    """
    rep = cost.entropy_report()
    q = (rep.q_A_lambda, rep.q_A_mu, rep.q_A_nu)
    p = (rep.p_A_lambda, rep.p_A_mu, rep.p_A_nu)
    series = cost.geometric_entropy_sum(p, q, rep.p_R, rep.q_R)
    checks = [
        abs_check("p_A + p_R", rep.p_A + rep.p_R, 1.0, 1e-9),
        abs_check("p_A_lambda closed form", rep.p_A_lambda, 1 / (2 * math.sqrt(3)), 1e-9),
        abs_check("p_A", rep.p_A, math.sqrt(3) / 2, 3e-5),
        abs_check("truncated series vs closed form", series, rep.H, 1e-9),
        abs_check("total_povm identity", rep.total_povm, 2 * (rep.total_vn + 1), 1e-12),
    ]
    published = {"q_A_lambda": 0.207, "q_A_mu": 0.366, "q_A_nu": 0.341, "q_R": 0.117,
                 "H": 1.19, "total_vn": 2.19, "total_povm": 6.38}
    comparison = {key: {"computed": getattr(rep, key), "published": val,
                        "difference": getattr(rep, key) - val} for key, val in published.items()}
    stats = StatsReport(mode="entropy", trials=0, checks=checks,
                        extra={"published_comparison": comparison}, metadata=metadata(config))
    return rep, stats


def verify_coding(config: ExperimentConfig) -> StatsReport:
    """Encode one block of ``trials`` sessions, decode it, compare rates."""
    n = config.trials
    seeds = lhv.session_seeds(config.master_seed, 0, n)
    msgs = protocol.alice_select_batch(config.state, seeds)
    messages = [msgs.message(i) for i in range(n)]
    block = coding.encode_block(messages, seeds)
    decoded = coding.decode_block(coding.CodedBlock.from_bytes(block.to_bytes()), seeds)
    h = cost.entropy_report().H
    rate = block.bits_per_session
    naive = coding.naive_bits_per_session(messages)
    ideal = float(cost.codelength_batch(msgs, seeds).mean())
    ok = decoded == messages
    checks = [
        Check("roundtrip", float(ok), 1.0, float(not ok), 0.0, "exact", ok),
        Check("payload bits/session", rate, h, rate - h, 0.05, "at most H + 0.05", rate <= h + 0.05),
        Check("naive bits/session", naive, rate, naive - rate, 0.0, "strictly above coded", naive > rate),
    ]
    return StatsReport(mode="coding", trials=n, checks=checks,
                       extra={"payload_bits": block.payload_bits, "payload_bits_per_session": rate,
                              "total_bits_per_session": block.total_bits / n, "ideal_bits_per_session": ideal,
                              "naive_bits_per_session": naive, "H": h},
                       metadata=metadata(config))


def verify_fidelity(config: ExperimentConfig) -> StatsReport:
    total = cost.entropy_report().total_vn
    budgets = {"zero": 0.0, "budget": min(config.budget, total), "full": total}
    values = {k: cost.fidelity_budget(v) for k, v in budgets.items()}
    checks = [abs_check("fidelity at 0 bits", values["zero"], 0.5, 1e-12),
              abs_check("fidelity at full cost", values["full"], 1.0, 1e-12)]
    return StatsReport(mode="fidelity", trials=0, checks=checks,
                       extra={"total_vn": total, "budgets": budgets, "fidelities": values},
                       metadata=metadata(config))


def run(config: ExperimentConfig) -> tuple[dict, StatsReport]:
    """Dispatch on ``config.mode``; returns the report payload and its checks."""
    if config.mode == "entropy":
        rep, stats = verify_entropy(config)
        entropy, checks = rep.to_dict(), stats.to_dict()
        checks["metadata"] = {**entropy["metadata"], **checks["metadata"]}
        return {**entropy, **checks}, stats
    stats = {
        "vn": verify_vn,
        "singlet": verify_singlet,
        "povm": verify_povm,
        "coding": verify_coding,
        "fidelity": verify_fidelity,
    }[config.mode](config)
    return stats.to_dict(), stats
