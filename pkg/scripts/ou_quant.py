"""LRW versus Euler-Maruyama under fp8/fp16/fp32 quantisation of drift and diffusion on OU."""

from _common import median_table, parser, run

if __name__ == "__main__":
    args = parser(__doc__, default_scale=0.05).parse_args()
    rows = run("ou-quant", args)
    median_table(rows, ["scheme", "precision", "dt"], "kl")
