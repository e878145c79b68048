"""Compare the compiled inner kernel with its pure-Python fallback."""
import argparse
import timeit

from shilnikov_lab import _kernel_py, kernel

SIGMA, MU, U, ETA0, EPS = -0.6, 8.0, 1.0, 0.05, 0.1


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=20)
    ap.add_argument("--delta", type=float, default=1e-6, help="entry height; smaller means a longer spiral")
    args = ap.parse_args(argv)

    a, b = EPS * ETA0, EPS * EPS * ETA0
    impls = {"python": _kernel_py.inner_flow}
    if kernel.BACKEND == "cython":
        impls["cython"] = kernel.inner_flow
    else:
        print("compiled kernel not built; timing the fallback only")
    print(f"{'backend':8s} {'jac':>5s} {'best us/call':>14s}")
    best = {}
    for name, fn in impls.items():
        for jac in (False, True):
            t = timeit.repeat(
                lambda: fn(SIGMA, MU, U, a, b, 0.3, args.delta, jac=jac), repeat=args.repeat, number=args.number
            )
            best[name, jac] = min(t) / args.number * 1e6
            print(f"{name:8s} {str(jac):>5s} {best[name, jac]:14.1f}")
    if "cython" in impls:
        for jac in (False, True):
            print(f"speedup jac={jac}: {best['python', jac] / best['cython', jac]:.1f}x")


if __name__ == "__main__":
    main()
