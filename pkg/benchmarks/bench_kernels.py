"""Time the compiled kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py --size 128 --delta 4 --repeat 5
"""
import argparse
import timeit

import numpy as np

from pyraflow import _backend


def cases(size, delta, channels, rng):
    H = W = size
    I1 = rng.normal(size=(H, W, channels))
    I2 = rng.normal(size=(H, W, channels))
    flow = rng.uniform(-3, 3, size=(H, W, 2))
    up = rng.normal(size=(H, W, (2 * delta + 1) ** 2))
    gy, gx = np.mgrid[0:H, 0:W]
    u = np.ascontiguousarray((gx + flow[..., 0]).ravel())
    v = np.ascontiguousarray((gy + flow[..., 1]).ravel())
    valid = np.ones((H, W), np.uint8)
    return {
        "gather": lambda k: k.gather(I2, u, v),
        "gather_grad": lambda k: k.gather_grad(I2, u, v),
        "sample_volume[corr]": lambda k: k.sample_volume(I1, I2, flow, delta, False),
        "sample_volume[sad]": lambda k: k.sample_volume(I1, I2, flow, delta, True),
        "sample_volume_adjoint": lambda k: k.sample_volume_adjoint(I1, I2, flow, delta, True, up),
        "splat": lambda k: k.splat(flow, valid),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--size", type=int, default=96, help="image height and width")
    p.add_argument("--delta", type=int, default=4, help="cost volume search range")
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    backends = {"numpy": _backend.get_kernels("numpy")}
    try:
        backends["cython"] = _backend.get_kernels("cython")
    except ImportError:
        print("compiled kernels not built; timing the numpy fallback only")

    work = cases(args.size, args.delta, args.channels, np.random.default_rng(42))
    print(f"{args.size}x{args.size}x{args.channels}, delta={args.delta}, "
          f"threads={_backend.thread_count()}, best of {args.repeat}")
    print(f"{'kernel':24s}" + "".join(f"{name:>12s}" for name in backends) + "     speedup")
    for name, fn in work.items():
        times = {b: min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat))
                 for b, k in backends.items()}
        row = f"{name:24s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times.values())
        if "cython" in times:
            row += f"  {times['numpy'] / times['cython']:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
