"""
State-aware routing of tasks across a pool of simulated expert agents.

The router embeds the evolving system state, scores each agent (and a learned
STOP action) by cosine similarity, and is trained on execution paths harvested
by solution-aware tree search over a deterministic agent simulator.
"""
