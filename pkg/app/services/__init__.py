# Numerical services: generating functions, Appell polynomials, roots, geometry, validation
