"""Integrate ln|S(jw)| for the default design.

Shows the net log-sensitivity area is zero, which is why |S| must exceed
one somewhere above crossover once it is held below one at low frequency.
"""
import numpy as np
from scipy.integrate import quad

from pamjoint import lsdp, lti
from pamjoint.uncertainty import PAPER_MODEL, nominal_tf, tf_to_ss


def main() -> None:
    g = tf_to_ss(nominal_tf(PAPER_MODEL))
    design = lsdp.synthesize(g, lsdp.W1_CANDIDATES["w13"])
    L = lti.series(lsdp.tracking_controller(design), g)

    def log_s(w):
        return np.log(abs(1.0 / (1.0 + L.evaluate(1j * w)[0, 0])))

    rep = lsdp.sigma_report(design, g)
    wc = rep.loop_crossover
    below = quad(log_s, 0.0, wc, limit=200)[0]
    edges = [wc, 10.0, 100.0, 1e3, 1e4, np.inf]
    above = sum(quad(log_s, a, b, limit=200)[0] for a, b in zip(edges, edges[1:]))
    hi = rep.omega > wc
    i = np.argmax(np.abs(rep.S[hi]))
    print(f"loop crossover        {wc:.4f} rad/s")
    print(f"area below crossover  {below:+.6f}")
    print(f"area above crossover  {above:+.6f}")
    print(f"net area              {below + above:+.2e}")
    print(f"peak |S| above wc     {np.abs(rep.S[hi])[i]:.4f} at {rep.omega[hi][i]:.1f} rad/s")


if __name__ == "__main__":
    main()
