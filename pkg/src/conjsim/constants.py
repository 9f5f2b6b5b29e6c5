"""Physical constants shared by every module.

Single source of truth: WGS-84 / EGM96 conventional values.
"""

MU_EARTH = 398600.4418  # km^3/s^2, Earth gravitational parameter
R_EARTH = 6378.137  # km, equatorial radius
J2 = 1.08262668e-3  # Earth oblateness coefficient

SECONDS_PER_DAY = 86400.0
TWO_PI = 6.283185307179586476925286766559
