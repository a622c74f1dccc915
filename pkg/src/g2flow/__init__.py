"""Numerical laboratory for the heterotic G2 flow of conformally coclosed
G2-structures on flat 7-tori."""
