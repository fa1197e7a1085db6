"""Numerical tolerances shared by validation code and the test-suite."""

#: Absolute tolerance (scaled by the largest rate) for structural checks:
#: generator row sums, probability vectors summing to one.
VALIDATION_TOL = 1e-12

#: Tolerance for algebraic identities such as ``D# Q = 1 pi - I``.
IDENTITY_TOL = 1e-10
