"""Physical constants (SI)."""
import math

C0 = 299792458.0
CBAR = 2.0 * math.pi / C0
MU0 = 4e-7 * math.pi
Z0 = MU0 * C0
