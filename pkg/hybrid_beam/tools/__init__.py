"""Domain modules: beam models, substructuring, stability, virtual rig and coupling loop."""
