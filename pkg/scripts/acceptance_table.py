"""Print one PASS/FAIL line per acceptance criterion with timings."""
import sys
import time

from pamjoint import acceptance


def main() -> int:
    t0 = time.perf_counter()
    outcomes = acceptance.run_all(progress=lambda o: print(o.line(), flush=True))
    n_pass = sum(o.passed for o in outcomes)
    print(f"{n_pass}/{len(outcomes)} passed in {time.perf_counter() - t0:.1f} s")
    return 0 if n_pass == len(outcomes) else 1


if __name__ == "__main__":
    sys.exit(main())
