"""Central-difference verification of every gradient in the stack.

grad_check compares the tape gradient of a scalar function against
(f(x+eps) - f(x-eps)) / 2eps coordinate by coordinate and reports the worst
relative error. The full suite covers each primitive op and the complete
encoder + fusion + loss composite for 1, 2 and 3 image-feature sources.
"""

import time

from dualpath.verify import GRAD_TOLERANCE, full_suite

start = time.monotonic()
results = full_suite(sources=(1, 2))

width = max(len(name) for name in results)
for name in sorted(results):
    err = results[name]
    flag = "ok " if err < GRAD_TOLERANCE else "FAIL"
    print(f"{flag} {name:<{width}}  max rel err {err:.3e}")

worst = max(results, key=results.get)
print(f"\nworst: {worst} at {results[worst]:.3e} "
      f"(tolerance {GRAD_TOLERANCE:g}), {time.monotonic() - start:.1f}s")
