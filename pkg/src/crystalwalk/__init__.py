"""Discrete geometric analysis of random walks on crystal lattices."""

__version__ = "0.1.0"

from .albanese import (AlbaneseStructure, EpsilonFamily, HarmonicRealization, HomologicalData,
                       LatticeAnalysis, albanese_structure, analyze, epsilon_family,
                       export_realization, family_member, homological_data, metric_norm,
                       modified_harmonic_realization)
from .errors import CrystalWalkError
from .heat_kernel import (HeatKernelTable, a1_numeric, exact_transition, gaussian_leading,
                          lclt_ratio, lclt_sup_error)
from .lattice_core import (QuotientEdge, QuotientGraph, build_builtin, load_graph, save_graph,
                           validate)
from .montecarlo import MCReport, PathStatistics, clt_report, sample_paths
from .perturbation import (PerturbationData, QTensors, a1_analytic, eigen_derivatives,
                           fd_crosscheck, q_tensors)
from .spectral import (InvariantMeasure, RefinedQuotient, apply_transition, check_irreducibility,
                       ergodic_average, invariant_measure, lifted_period, perron_eigendata,
                       quotient_period, refine_quotient, twisted_operator)

__all__ = [name for name in dir() if not name.startswith("_")]
