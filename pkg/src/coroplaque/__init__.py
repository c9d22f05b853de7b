"""Coronary plaque characterization on synthetic CCTA phantoms.

Radiomics with boosted trees, a polar 2D recurrent CNN, a 3D recurrent CNN
baseline and a radiomics-sequence GRU, evaluated with patient-stratified
cross validation.
"""

__version__ = "0.1.0"
