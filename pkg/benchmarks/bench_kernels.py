"""Time the compiled angle-spectrum kernel against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from hybrid_isac import _kernels_py
from hybrid_isac.scenario import OfdmConfig

try:
    from hybrid_isac import _kernels
except ImportError:
    _kernels = None


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()

    cfg = OfdmConfig()
    rng = np.random.default_rng(0)
    cases = [("reference grid", cfg.N_R, cfg.K * cfg.M, 4096),
             ("fine angle grid", cfg.N_R, cfg.K * cfg.M, 16384),
             ("8 antennas", 8, cfg.K * cfg.M, 4096)]
    print(f"{'case':<18}{'shape':>12}{'n_fft':>8}{'numpy ms':>11}{'cython ms':>11}{'speedup':>9}")
    for name, n_ant, n_snap, n_fft in cases:
        y = rng.standard_normal((n_ant, n_snap)) + 1j * rng.standard_normal((n_ant, n_snap))
        t_np = min(timeit.repeat(lambda: _kernels_py.angle_spectrum(y, n_fft), number=1, repeat=args.repeat))
        if _kernels is None:
            t_cy, speed = float("nan"), float("nan")
        else:
            ref = _kernels_py.angle_spectrum(y, n_fft)
            assert np.allclose(_kernels.angle_spectrum(y, n_fft), ref, rtol=1e-10)
            t_cy = min(timeit.repeat(lambda: _kernels.angle_spectrum(y, n_fft), number=1, repeat=args.repeat))
            speed = t_np / t_cy
        print(f"{name:<18}{f'{n_ant}x{n_snap}':>12}{n_fft:>8}{1e3 * t_np:>11.2f}{1e3 * t_cy:>11.2f}{speed:>8.1f}x")
    if _kernels is None:
        print("compiled extension not built; only the numpy path was timed")


if __name__ == "__main__":
    main()
