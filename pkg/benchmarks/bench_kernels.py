"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs on identical inputs under both backends; the outputs are
compared before timing so a speedup never hides a wrong answer.
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from graspsynth import _fallback
from graspsynth.geometry.sampling import sample_surface
from graspsynth.geometry.shapes import cylinder_mesh, icosphere
from graspsynth.hand import load_hand
from graspsynth.objects import make_object
from graspsynth.sampler import EnergyParams, generate_seeds, seed_to_pose

try:
    from graspsynth import _core
except ImportError:
    _core = None


def cases():
    rng = np.random.default_rng(0)
    ico = icosphere(0.05, 3)
    obj = make_object(cylinder_mesh(0.02, 0.15), use_cache=False)
    grid = obj.sdf
    pts = rng.uniform(-0.08, 0.08, size=(2000, 3))
    probes = rng.uniform(grid.origin, grid.upper, size=(20000, 3))
    hand = load_hand("barrett-like")
    p = EnergyParams()
    poses = [seed_to_pose(s, hand) for s in generate_seeds(obj, 2, 0)]
    surface = sample_surface(ico, 500, 0).positions

    def energy(mod):
        k = mod.EnergyKernel(hand.kernel_arrays(), np.ascontiguousarray(grid.values), grid.origin, grid.h,
                             p.step, p.bisect_iters, p.eps, p.beta, p.cap_depth, p.cap_value)
        return lambda: np.array([k.close_and_energy(x.R, x.t, x.d)[1] for x in poses])

    return {
        "triangle_distances (2000 pts x 1280 tris)":
            lambda mod: lambda: mod.triangle_distances(pts, ico.vertices, ico.faces)[0],
        "winding_numbers (500 pts x 1280 tris)":
            lambda mod: lambda: mod.winding_numbers(surface * 0.99, ico.vertices, ico.faces),
        "trilinear (20000 probes)":
            lambda mod: lambda: mod.trilinear(grid.values, grid.origin, grid.h, probes)[1],
        f"close_and_energy ({len(poses)} poses)": energy,
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    rows = []
    print(f"{'kernel':44s} {'python s':>10s} {'compiled s':>11s} {'speedup':>8s}")
    for name, make in cases().items():
        slow, fast = make(_fallback), make(_core)
        if not np.allclose(slow(), fast(), rtol=1e-9, atol=1e-12):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 2
        # the fallback is slow enough that fewer repeats still give a stable minimum
        t_py = min(timeit.repeat(slow, number=1, repeat=max(1, args.repeat // 2)))
        t_c = min(timeit.repeat(fast, number=1, repeat=args.repeat))
        rows.append({"kernel": name, "python_s": t_py, "compiled_s": t_c, "speedup": t_py / t_c})
        print(f"{name:44s} {t_py:10.4f} {t_c:11.5f} {t_py / t_c:7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
