"""Ground-level visible/occluded agreement of the fast fields with the exact DDA.

    python scripts/sweep_agreement.py --n-envs 20 --sensors 5
"""
import argparse
import time

import numpy as np

from kcover import CityGenParams, GridSpec, generate_random_city, make_sensor, occlusion_field, visibility_at_height


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-envs", type=int, default=20)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--sensors", type=int, default=5)
    ap.add_argument("--sparse", action="store_true", help="use the sparse default generator instead of urban")
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()

    spec = GridSpec(a.size, a.size)
    params = CityGenParams() if a.sparse else CityGenParams.urban(spec)
    rng = np.random.default_rng(a.seed)
    agree = {"sweep": [], "ring": []}
    secs = {"exact": 0.0, "sweep": 0.0, "ring": 0.0}
    for e in range(a.n_envs):
        env = generate_random_city(spec, params, a.seed * 1000 + e)
        streets = np.argwhere(env.h == 0)
        for j, i in streets[rng.choice(len(streets), size=a.sensors, replace=False)]:
            s = make_sensor(env, (int(i), int(j)))
            masks = {}
            for m in secs:
                t0 = time.perf_counter()
                masks[m] = visibility_at_height(occlusion_field(env, s, m), 0.0)
                secs[m] += time.perf_counter() - t0
            for m in agree:
                agree[m].append((masks[m] == masks["exact"]).mean())
    n = a.n_envs * a.sensors
    for m, v in agree.items():
        print(f"{m:<6} agreement mean {np.mean(v):.4%}  min {np.min(v):.4%}  ({secs[m] / n * 1e3:.2f} ms/field)")
    print(f"exact  {secs['exact'] / n * 1e3:.2f} ms/field")


if __name__ == "__main__":
    main()
