"""Fat Poisson cylinders in the Poincare ball, their induced spherical-cap
processes, the Euclidean fractal ball model and Mandelbrot fractal
percolation, with Monte Carlo audits of the couplings between them."""

__version__ = "0.1.0"
