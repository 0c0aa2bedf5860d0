"""Relative final size against the heterogeneity factor x (ER, SEIR)."""
from _common import parser, report, setup

from flowredirect.analysis import sweep_heterogeneity
from flowredirect.graph import GraphSpec

p = parser(__doc__)
p.add_argument("--xs", nargs="+", type=float, default=[0.0, 0.25, 0.5, 0.75, 1.0])
args = p.parse_args()
setup(args)
records = sweep_heterogeneity(GraphSpec("erdos_renyi", args.size, args.seed), args.xs, args.replicates)
report(records, args.out / "heterogeneity_sweep.csv", group=lambda r: (f"x={r.x:g}",))
