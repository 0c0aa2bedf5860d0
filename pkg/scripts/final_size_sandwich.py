"""Check the small-outbreak final-size sandwich around sampled reference policies."""
import json

from _common import parser, setup

from flowredirect.analysis import Prop3Config, json_safe, sample_protocol, verify_prop3
from flowredirect.errors import SkippedPreconditionFailed
from flowredirect.graph import GraphSpec

p = parser(__doc__, replicates=10)
p.add_argument("--target-r0", type=float, default=0.8)
p.add_argument("--epsilon", type=float, default=0.1)
args = p.parse_args()
setup(args)
cfg = Prop3Config(epsilon=args.epsilon, target_r0=args.target_r0)
reports = []
for r in range(args.replicates):
    s = sample_protocol(GraphSpec("erdos_renyi", args.size, args.seed), "SEIR", 1.0, r)
    try:
        rep = verify_prop3(s, cfg).to_dict()
    except SkippedPreconditionFailed as exc:
        rep = {"status": "SkippedPreconditionFailed", "reason": str(exc)}
    rep["seed"] = r
    reports.append(rep)
    print(r, rep["status"], rep.get("ball_radius"), rep.get("j0"))
(args.out / "final_size_sandwich.json").write_text(json.dumps(json_safe(reports), indent=2, sort_keys=True) + "\n")
