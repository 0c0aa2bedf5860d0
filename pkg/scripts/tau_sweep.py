"""Relative final size against the diffusion time scale tau (ER, SEIR)."""
from _common import parser, report, setup

from flowredirect.analysis import sweep_tau
from flowredirect.graph import GraphSpec

p = parser(__doc__)
p.add_argument("--taus", nargs="+", type=float, default=[1e-2, 1e-1, 1.0, 10.0, 100.0])
args = p.parse_args()
setup(args)
records = sweep_tau(GraphSpec("erdos_renyi", args.size, args.seed), args.taus, args.replicates)
report(records, args.out / "tau_sweep.csv", group=lambda r: (f"tau={r.tau:g}",))
