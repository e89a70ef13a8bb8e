"""Persona fan-out with the mock annotator and ensemble aggregation.

Each persona annotates the same query; the responses become a
Persona x Entity confidence matrix (High/Medium/Low -> 3/2/1, unselected
-> 0), which the ensemble collapses into one annotation by thresholded
weighted mean.
"""

import numpy as np

from querydistill import (aggregate_ensemble, build_confidence_matrix,
                          default_gazetteer, default_personas,
                          default_registry, mock_annotate, mock_handle,
                          parse_response)

registry = default_registry()
personas = default_personas()[:4]
query = "tom hanks comedy movies"

# persona biases make the mock ensemble genuinely disagree
handle = mock_handle(
    default_gazetteer(),
    seed=11,
    noise_rate=0.4,
    persona_bias={
        "movie_critic": {"add": {"Award": "Low"}},
        "movie_buff": {"remove": ["IntentMovie"]},
    },
)

annotations = {}
for persona in personas:
    raw = mock_annotate(handle, query, persona=persona.id)
    annotations[persona.id] = parse_response(registry, raw)
    print(f"{persona.name:<16} -> {raw.replace(chr(10), '  ')}")
print()

matrix = build_confidence_matrix(query, annotations, personas, registry)
active = [c for c in range(len(registry)) if matrix.values[:, c].any()]
print("confidence matrix (columns with any signal):")
print("  " + "  ".join(f"{registry.ids[c]:>14}" for c in active))
for row, pid in enumerate(matrix.persona_ids):
    cells = "  ".join(f"{matrix.values[row, c]:>14}" for c in active)
    print(f"  {cells}    {pid}")
print()

# aggregate: uniform weights, select at mean score >= 1.5
ensemble = aggregate_ensemble(matrix, registry)
print("ensemble annotation:",
      {e: c.label for e, c in sorted(ensemble.entities.items())})

# dominant weight on one persona reduces to that persona's view
weights = np.array([10.0, 0.1, 0.1, 0.1])
solo = aggregate_ensemble(matrix, registry, weights=weights, threshold=0.5)
print("merchandiser-dominated:",
      {e: c.label for e, c in sorted(solo.entities.items())})
