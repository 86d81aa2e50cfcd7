"""Learn LightsOut(3) from sampled transitions, compile it, plan with it.

Small forests keep this under a minute. The planner runs on the compiled
formulas directly; the PDDL text is only measured.
"""

from dsama.compile import domain_size, emit_domain, flatten_domain
from dsama.dataset import make_instances, make_lights_out, sample_transitions, split
from dsama.forest import ForestParams
from dsama.formula import NegVar, Var, conj
from dsama.model import evaluate_effects, evaluate_preconditions, learn
from dsama.planner import actions_from_models, search, validate

dom = make_lights_out(3)
train, test = split(sample_transitions(dom, 3000, seed=0), 0.9, seed=0)
print(f"{len(train)} training / {len(test)} test transitions over {dom.width} bits")

for T, D in [(1, 4), (5, 4), (5, 12)]:
    models = learn(train, ForestParams(T=T, D=D, seed=0))
    acc = evaluate_effects(models, test)
    pre = evaluate_preconditions(models, test, dom)
    size = domain_size(models)
    flat = flatten_domain(models, 10 ** 6, max_seconds=60)
    print(f"\nT={T} D={D}: effect accuracy {acc:.3%}, precondition F {pre.f:.3f}, "
          f"PDDL {size:,} bytes, {flat.total if flat.total is not None else 'too many'} "
          f"disjunction-free actions")

    actions = actions_from_models(models)
    outcomes = {}
    for inst in make_instances(dom, [7, 14], 5, seed=0):
        goal = conj(*[Var(k) if b else NegVar(k) for k, b in enumerate(inst.goal)])
        r = search(actions, inst.init, goal, max_seconds=20)
        key = r.outcome
        if r.solved:
            key += "/valid" if validate(r.plan, inst, dom, actions).valid else "/invalid"
        outcomes[key] = outcomes.get(key, 0) + 1
    print("  planning:", outcomes)

small = learn(train, ForestParams(T=1, D=2, seed=0))
print("\nfirst action of a T=1, D=2 domain:\n")
text = emit_domain(small)
start = text.index("(:action")
print(text[start: text.index("(:action", start + 1)])
