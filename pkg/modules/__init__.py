__all__ = [
    "Analytic",
    "Config",
    "Constants",
    "Converters",
    "DualOperator",
    "Errors",
    "Inverse",
    "Lattice",
    "Model",
    "MSSets",
    "Reports",
    "Resonance",
    "Schur",
    "Spectral",
    "Trajectories",
    "Workers",
]
