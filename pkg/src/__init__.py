# Damped Kacanov iteration for quasilinear diffusion problems
