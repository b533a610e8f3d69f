"""Wall time of one full street-candidate gain field.

    python scripts/time_gain_field.py --size 128
"""
import argparse
import os
import time

from kcover import CityGenParams, GridSpec, PsiStack, Weights, gain_field, generate_random_city, street_mask


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--method", default="sweep")
    ap.add_argument("--seed", type=int, default=8)
    a = ap.parse_args()

    spec = GridSpec(a.size, a.size)
    env = generate_random_city(spec, CityGenParams.urban(spec), a.seed)
    mask = street_mask(env)
    warm = generate_random_city(GridSpec(16, 16), CityGenParams.urban(GridSpec(16, 16)), 0)
    gain_field(warm, PsiStack.empty(warm, 3), Weights.halving(3), street_mask(warm), a.method)
    t0 = time.perf_counter()
    gf = gain_field(env, PsiStack.empty(env, 3), Weights.halving(3), mask, a.method)
    dt = time.perf_counter() - t0
    print(f"{a.size}x{a.size}, {int(mask.sum())} candidates, method {a.method}: {dt:.2f} s "
          f"on {os.cpu_count()} core(s); best cell {gf.argmax()} gain {gf.max_gain():.3f}")


if __name__ == "__main__":
    main()
