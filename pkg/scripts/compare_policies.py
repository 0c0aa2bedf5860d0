"""Relative final size of each policy, SEIR, one batch per graph family."""
from _common import parser, report, setup

from flowredirect.analysis import compare_batch
from flowredirect.graph import FAMILIES, GraphSpec

p = parser(__doc__)
p.add_argument("--families", nargs="+", default=list(FAMILIES))
p.add_argument("--tau", type=float, default=1.0)
args = p.parse_args()
setup(args)
records = []
for fam in args.families:
    records += compare_batch(GraphSpec(fam, args.size, args.seed), args.replicates, args.tau, "SEIR")
report(records, args.out / "compare_policies.csv", group=lambda r: (r.family,))
