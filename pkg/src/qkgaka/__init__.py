"""Simulation suite for QK-GRID based authentication and key agreement.

Modules:

* :mod:`qkgaka.qkd_link` BB84-style exchange, sifting and eavesdropper detection
* :mod:`qkgaka.qk_grid` the QK-GRID key-material table
* :mod:`qkgaka.key_hierarchy` master-key derivation and the LTE key tree
* :mod:`qkgaka.aka_sim` message-level QKG-AKA / EPS-AKA / SE-AKA simulator
* :mod:`qkgaka.lifetime_model` analytic key-lifetime model with Monte Carlo check
* :mod:`qkgaka.cli` command-line front end
"""

__version__ = "0.1.0"
