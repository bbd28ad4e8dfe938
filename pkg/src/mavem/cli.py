"""Command-line driver for the convergence and epsilon studies."""
import argparse
import logging
import sys

from .forms import StabilizationSpec
from .problems import PROBLEMS
from .solver import SolverConfig
from .study import EPSILON_SCHEDULE, run_convergence_study, run_epsilon_study


def _floats(text):
    return [float(s) for s in text.split(",") if s.strip()]


def _ints(text):
    return [int(s) for s in text.split(",") if s.strip()]


def build_parser():
    p = argparse.ArgumentParser(
        prog="mavem",
        description="Virtual element solver for the regularised Monge-Ampere equation.")
    p.add_argument("--problem", choices=PROBLEMS, default=None,
                   help="default: p1 for convergence, quadratic for the epsilon study")
    p.add_argument("--study", choices=("convergence", "epsilon"), default="convergence")
    p.add_argument("--mesh", choices=("quad", "voronoi"), default="quad")
    p.add_argument("--order", type=int, default=2, help="polynomial order (>= 2)")
    p.add_argument("--sizes", type=_ints, default=None,
                   help="comma-separated mesh sizes: squares per side, or Voronoi cell count")
    p.add_argument("--epsilon", type=float, default=0.01,
                   help="regularisation weight for the convergence study")
    p.add_argument("--epsilons", type=_floats, default=list(EPSILON_SCHEDULE),
                   help="decreasing schedule for the epsilon study")
    p.add_argument("--solver", choices=("newton", "fixedpoint"), default="newton")
    p.add_argument("--damping", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=1e-11)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--stab", choices=("constant", "supnorm"), default="constant")
    p.add_argument("--stab-constant", type=float, default=1.0)
    p.add_argument("--stab-b-factor", type=float, default=0.0,
                   help="multiplier of the determinant-form stabilisation (1 = positive sign)")
    p.add_argument("--phi", choices=("frozen", "identity"), default="frozen")
    p.add_argument("--seed", type=int, default=0, help="Voronoi seed")
    p.add_argument("--output", default=None, help="path of the .dat table")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.order < 2:
        parser.error("--order must be at least 2")
    try:
        config = SolverConfig(method=args.solver, tol=args.tol, max_iter=args.max_iter,
                              damping=args.damping, phi=args.phi,
                              stab=StabilizationSpec(args.stab, args.stab_constant,
                                                     args.stab_b_factor))
    except ValueError as exc:
        parser.error(str(exc))
    if args.sizes is not None and any(s < 1 for s in args.sizes):
        parser.error("--sizes must be positive")
    if args.epsilon <= 0 or any(e <= 0 for e in args.epsilons):
        parser.error("epsilon values must be positive")

    if args.study == "convergence":
        args.problem = args.problem or "p1"
        sizes = args.sizes or ([11, 20, 40, 80] if args.mesh == "quad" else [121, 400, 1600])
        output = args.output or f"{args.problem}_{args.mesh}_p{args.order}.dat"
        result = run_convergence_study(args.problem, args.order, sizes, args.epsilon, args.mesh,
                                       config, args.seed, output)
    else:
        args.problem = args.problem or "quadratic"
        size = (args.sizes or [20])[0]
        output = args.output or f"eps_{args.mesh}_p{args.order}.dat"
        try:
            result = run_epsilon_study(args.order, size, args.epsilons, args.mesh, config,
                                       args.seed, output, args.problem)
        except ValueError as exc:
            parser.error(str(exc))
    logging.getLogger(__name__).info("wrote %s", output)
    return 0 if result.converged else 1


if __name__ == "__main__":
    sys.exit(main())
