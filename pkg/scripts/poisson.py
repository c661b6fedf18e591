"""Langevin sampling of the hierarchical Poisson posterior: explosions and ergodic-mean MSE."""

from _common import median_table, parser, run

if __name__ == "__main__":
    args = parser(__doc__, default_scale=0.1).parse_args()
    rows = run("poisson", args)
    median_table(rows, ["scheme", "dt"], "mse")
    print()
    median_table(rows, ["scheme", "dt"], "exploded")
