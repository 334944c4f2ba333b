"""Simulator for mode-division-multiplexed photonic neural network hardware.

Modules
-------
- core: transfer matrices, fields and channel bookkeeping
- coupler: coupled-mode model of the single-mode to multi-mode coupler
- mzi: asymmetric Mach-Zehnder spectrum synthesis and coupling-ratio extraction
- mrr: microring drop/through response and heater inversion
- weightbank: MDM/WDM weight banks, intermodal mixing, calibration, compensation
- network: two-neuron hairpin recurrent network and optical demixing
- cli: config-driven experiment runner
"""

__version__ = "0.1.0"
