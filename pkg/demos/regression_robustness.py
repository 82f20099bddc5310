"""
Least squares with corrupted responses
======================================

A small version of the outlier-fraction sweep: SGD against min-2-loss SGD
on noiseless regression, median distance to w* over 11 seeds.
"""
from mklsgd.experiments import SweepConfig, lookup, run_sweep, summarize

eps = [0.0, 0.1, 0.2, 0.3, 0.4]
cfg = SweepConfig(problem="regression", base={"n": 1000, "d": 10},
                  grid={"epsilon": eps, "variant": ["sgd", "mkl", "oracle"], "k": [2]},
                  seeds=tuple(range(11)))
S = summarize(run_sweep(cfg))

print(f"{'eps':>5s} {'sgd':>10s} {'mkl':>10s} {'oracle':>10s}")
for e in eps:
    row = [lookup(S, epsilon=e, variant=v).median for v in ("sgd", "mkl", "oracle")]
    print(f"{e:5.2f} " + " ".join(f"{x:10.4g}" for x in row))

# larger k trims harder but converges more slowly
cfg = SweepConfig(problem="regression", base={"n": 1000, "d": 10, "epsilon": 0.2},
                  grid={"variant": ["mkl"], "k": [2, 3, 5]}, seeds=tuple(range(11)))
for s in summarize(run_sweep(cfg)):
    print(f"k={s.coords['k']}: median distance {s.median:.4g}, median steps {s.median_steps:.0f}")
