"""Composing annotation prompts and parsing annotator responses.

The prompt grows cumulatively through four variants: the bare task prompt,
plus confidence-level instructions, plus per-entity reasoning steps, plus
in-context examples. A persona description can be prepended to any of them.
"""

from querydistill import (PromptConfig, PromptVariant, build_prompt,
                          default_personas, default_registry, parse_response)

registry = default_registry()
print(f"registry: {len(registry)} entities, hash {registry.hash[:12]}...")
print("first five:", ", ".join(registry.ids[:5]))
print()

# --- the four variants grow monotonically -------------------------------
query = "french comedy movies"
for variant in PromptVariant:
    config = PromptConfig(variant=variant, registry_hash=registry.hash)
    prompt = build_prompt(config, registry, query)
    print(f"{variant.name:<22} {len(prompt.text):>6} chars  "
          f"sections: {', '.join(prompt.sections)}")
print()

# --- a persona fronts the prompt -----------------------------------------
merchandiser = {p.id: p for p in default_personas()}["merchandiser"]
config = PromptConfig(variant=PromptVariant.CONFIDENCE_COT_ICL,
                      registry_hash=registry.hash)
prompt = build_prompt(config, registry, query, persona=merchandiser)
print("with persona, the prompt starts:")
print(" ", prompt.text[:78], "...")
print()

# --- responses parse tolerantly -------------------------------------------
raw = """Genre|High
AudioLanguage|medium
IntentMovie|High
SomeMadeUpThing|High
Genre|Low
"""
annotation = parse_response(registry, raw)
print("parsed entities:",
      {e: c.label for e, c in sorted(annotation.entities.items())})
print("warnings:", list(annotation.warnings))

# the single line "None" is the explicit empty annotation
print("empty response parses to:", parse_response(registry, "None").entities)
