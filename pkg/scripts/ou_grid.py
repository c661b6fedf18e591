"""KL to the OU stationary law over the (dt, dx multiplier) grid."""

from _common import median_table, parser, run

if __name__ == "__main__":
    args = parser(__doc__, default_scale=0.02).parse_args()
    rows = run("ou-grid", args)
    median_table(rows, ["dt", "dx_multiplier"], "kl")
