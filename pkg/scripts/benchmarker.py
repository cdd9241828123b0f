"""
Per-stage timings of the coarse-to-fine pipeline on phantoms of growing size.
Usage: python scripts/benchmarker.py --sizes 96,128,160 --jobs 4 [--profile]
"""

import argparse
import cProfile
import pstats
import timeit

from toothseglib import PipelineConfig, default_jaw, generate_phantom, get_coarse, get_fine
from toothseglib.workflows.pipeline import run_pipeline_detailed


def run_once(size, teeth, jobs):
    image, _, _ = generate_phantom(default_jaw(teeth, (size, size, size), seed=0, noise_sigma=10.0))
    return run_pipeline_detailed(
        image, get_coarse("classical"), get_fine("threshold"), PipelineConfig(), jobs=jobs
    )


def benchmark(sizes, teeth, jobs, profile):
    print("Running Benchmark...")

    for size in sizes:
        start = timeit.default_timer()
        run = run_once(size, teeth, jobs)
        end = timeit.default_timer()
        stages = ", ".join(f"{k} {v:.3f}s" for k, v in run.timings_s.items())
        print(f"{size}^3: total {end - start:.3f}s ({stages})")

    if profile:
        print("\nGenerating Profile...")
        profiler = cProfile.Profile()
        profiler.enable()
        run_once(sizes[-1], teeth, jobs)
        profiler.disable()

        stats = pstats.Stats(profiler).sort_stats("cumulative")
        stats.print_stats(15)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="96,128,160", help="Comma-separated voxels per axis")
    parser.add_argument("--teeth", type=int, default=16)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--profile", action="store_true", help="cProfile the largest size")
    args = parser.parse_args()
    benchmark([int(s) for s in args.sizes.split(",")], args.teeth, args.jobs, args.profile)
