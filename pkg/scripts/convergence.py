"""Weak error of E[cos x(1)] for dx = -x dt + dw against dt, with fitted orders."""

import json

from _common import parser, run

if __name__ == "__main__":
    args = parser(__doc__, default_scale=0.1).parse_args()
    rows = run("converge", args)
    for r in rows:
        print(f"{r['scheme']:<10} dt={float(r['dt']):<7g} error={float(r['error']):+.3e} +- {float(r['std_error']):.1e}")
    sidecar = json.loads((args.out_dir / "converge.json").read_text())
    print("fitted weak orders:", sidecar.get("summary", {}))
