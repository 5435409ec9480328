"""Desk-scale benchmark: method comparison plus rho and K sweeps on the seeded phantom set.

Prints a trend summary, writes compare.csv, sweep_rho.csv and sweep_k.csv plus
summary.json to DESK_BENCH_OUT (default /tmp/desk_benchmark). Runs shared by the
comparison and the sweeps (rho 0.4, K 5) are trained once. Sweep workers default
to the CPU count; override with SSDU_SWEEP_WORKERS.
"""
import json, os, time
from pathlib import Path

from mmssdu.api.schemas import CompareConfig, DatasetConfig, SweepConfig, TrainConfig
from mmssdu.data.phantom import make_desk_dataset
from mmssdu.workers.experiments import compare_methods, run_sweep

OUT = Path(os.getenv("DESK_BENCH_OUT", "/tmp/desk_benchmark"))
WORKERS = int(os.getenv("SSDU_SWEEP_WORKERS", str(os.cpu_count() or 1)))
SEEDS = [0, 1, 2]
BASE = TrainConfig()

METHODS = ["zerofilled", "cgsense", "supervised", "ssdu", "multimask", "multimask-gaussian", "cyclic"]
RHO_VALUES = [0.1, 0.2, 0.4, 0.6]
K_VALUES = [1, 3, 5, 8]


def summarize(table):
    out = {}
    for key in table.keys():
        pooled = table.pooled(key)
        out[str(key)] = {
            "nmse_mean": pooled.nmse_mean if pooled else None,
            "nmse_median": pooled.nmse_median if pooled else None,
            "ssim_median": pooled.ssim_median if pooled else None,
            "per_seed_nmse": [r.report.nmse_mean if r.ok else None for r in table.per_seed(key)],
            "errors": [r.error for r in table.per_seed(key) if not r.ok],
        }
    return out


started = time.time()
OUT.mkdir(parents=True, exist_ok=True)
dataset = make_desk_dataset(DatasetConfig())
print(f"dataset: {len(dataset.train)} train / {len(dataset.test)} test, n={dataset.train[0].pattern.mask.shape[0]}")
print(f"workers: {WORKERS}")

cache = {}
tables = {
    "compare": compare_methods(CompareConfig(methods=METHODS, base=BASE, seeds=SEEDS), dataset, WORKERS, cache),
    "rho": run_sweep(SweepConfig(axis="rho", values=RHO_VALUES, base=BASE, seeds=SEEDS), dataset, WORKERS, cache),
    "k": run_sweep(SweepConfig(axis="k", values=K_VALUES, base=BASE, seeds=SEEDS), dataset, WORKERS, cache),
}
for name, filename in [("compare", "compare.csv"), ("rho", "sweep_rho.csv"), ("k", "sweep_k.csv")]:
    tables[name].write_csv(OUT / filename)
results = {name: summarize(table) for name, table in tables.items()}

cmp_ = results["compare"]
print("\n=== METHODS (mean NMSE, median SSIM) ===")
for method, row in cmp_.items():
    print(f"  {method:20} nmse={row['nmse_mean']!r:24} ssim={row['ssim_median']!r}")

for axis in ("rho", "k"):
    curve = {key: row["nmse_mean"] for key, row in results[axis].items() if row["nmse_mean"] is not None}
    best = min(curve, key=curve.get) if curve else None
    print(f"\n=== {axis.upper()} SWEEP === best={best}")
    for key, value in curve.items():
        print(f"  {key:>6}: {value!r}")


def seedwise(a, b):
    pairs = zip(cmp_[a]["per_seed_nmse"], cmp_[b]["per_seed_nmse"])
    return sum(1 for x, y in pairs if x is not None and y is not None and x > y)


print("\n=== TRENDS (seeds where left NMSE > right) ===")
for a, b in [("cgsense", "ssdu"), ("ssdu", "multimask"), ("multimask-gaussian", "multimask"), ("cyclic", "multimask")]:
    print(f"  {a} > {b}: {seedwise(a, b)}/{len(SEEDS)}")

results["wall_time"] = time.time() - started
results["trained_runs"] = len(cache)
with open(OUT / "summary.json", "w") as fh:
    json.dump(results, fh, indent=2)
print(f"\nwrote {OUT} ({results['wall_time']:.0f}s, {len(cache)} trained runs)")
