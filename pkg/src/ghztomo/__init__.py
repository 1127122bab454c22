"""Heralded GHZ source simulation and multimode homodyne tomography."""

from .experiment import ExperimentConfig, PhiGrid, ResultTable, oracle_C, run, theoretical_C
from .fock import MixedEnsemble, ModeLayout, PureKet, apply_pair_unitary, inner_product, project_mode_count
from .homodyne import DetectorSettings, draw_settings, joint_pdf, sample
from .kernel import KernelRequest, generic_operator_kernel, kappa, matrix_element_kernel
from .source import CrystalParams, HeraldedOutput, herald
from .special import laguerre

__all__ = [
    "CrystalParams", "DetectorSettings", "ExperimentConfig", "HeraldedOutput", "KernelRequest",
    "MixedEnsemble", "ModeLayout", "PhiGrid", "PureKet", "ResultTable", "apply_pair_unitary",
    "draw_settings", "generic_operator_kernel", "herald", "inner_product", "joint_pdf", "kappa",
    "laguerre", "matrix_element_kernel", "oracle_C", "project_mode_count", "run", "sample",
    "theoretical_C",
]
