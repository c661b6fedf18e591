"""Terminal variance of a Gaussian flow model run as an SDE, for several Langevin scales."""

import argparse
import math

from lrwsde.baselines import EMStepper
from lrwsde.core import RngStream, StepConfig, simulate_path
from lrwsde.lrw import make_lrw_stepper
from lrwsde.models import make_gaussian_flow
from lrwsde.transforms import NoiseSchedule, flow_to_sde

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--replicas", type=int, default=100_000)
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--sigma-data", type=float, default=1.0)
    args = p.parse_args()
    dt, sd = 1 / args.steps, args.sigma_data
    print(f"{'a':>5} {'scheme':>6} {'variance':>10} {'target':>8} {'z':>6}")
    for i, (a, scheme) in enumerate([(0.0, "em"), (0.3, "em"), (0.3, "lrw"), (1.0, "em"), (1.0, "lrw")]):
        ns = NoiseSchedule.linear(2.0, 0.1, a=a)
        spec = flow_to_sde(make_gaussian_flow(sd, ns), ns, 1)
        x0 = math.sqrt(sd**2 + ns.sigma_of_t(0.0) ** 2) * RngStream(1, i).normal((args.replicas, 1))
        stepper = EMStepper() if scheme == "em" else make_lrw_stepper(
            lambda t, ns=ns: math.sqrt(dt * 2 * ns.alpha_of_t(t)))
        x = simulate_path(spec, stepper, x0, StepConfig(dt, args.steps), RngStream(2, i)).state[:, 0]
        target = sd**2 + ns.sigma_of_t(1.0) ** 2
        c = (x - x.mean()) ** 2
        se = math.sqrt(c.var() / x.size)
        print(f"{a:>5} {scheme:>6} {x.var():>10.4f} {target:>8.4f} {(x.var() - target) / se:>6.2f}")
