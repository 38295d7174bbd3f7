"""Shape optimization of two-dimensional liquid-crystal droplets.

Modules: ``geometry`` (admissible curves), ``field`` (harmonic director
angle on the droplet), ``energy`` (the droplet functionals), ``optimize``
(spectral shape descent and Euler-Lagrange residuals), ``diagnostics``
(chord-arc / VMO / Weil-Petersson curve measurements), ``asymptotics``
(small- and large-volume limit studies), ``io`` and ``cli``.
"""

__version__ = "0.1.0"
