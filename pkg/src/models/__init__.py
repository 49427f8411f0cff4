# Diffusion models for quasilinear problems
