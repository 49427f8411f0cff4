# Mesh, finite element forms, linear solves and the Kacanov iteration
