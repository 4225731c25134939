"""Print sample-size lower bounds over a (p, d) grid as a plain text table."""
import argparse

from activegms.fano import theorem_gaussian_bound, theorem_ising_bound


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", choices=("ising", "gaussian"), default="ising")
    ap.add_argument("--p", default="50,100,200,500,1000")
    ap.add_argument("--d", default="2,4,8")
    ap.add_argument("--strength", type=float, default=1.0, help="lambda (ising) or tau (gaussian)")
    ap.add_argument("--delta", type=float, default=0.1)
    args = ap.parse_args()

    fn = theorem_ising_bound if args.model == "ising" else theorem_gaussian_bound
    ps = [int(x) for x in args.p.split(",")]
    ds = [int(x) for x in args.d.split(",")]
    first = fn(ps[0], ds[0], args.strength, args.delta)
    names = [t.name for t in first.terms]
    print(f"{'p':>6} {'d':>3} " + " ".join(f"{n:>24}" for n in names) + f" {'n_lower':>12}")
    for p in ps:
        for d in ds:
            r = fn(p, d, args.strength, args.delta)
            cells = " ".join(f"{t.value:>24.4g}" for t in r.terms)
            print(f"{p:>6} {d:>3} {cells} {r.n_lower:>12.4g}")


if __name__ == "__main__":
    main()
