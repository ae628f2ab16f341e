"""Delayed-isolation epidemic models: trajectory integration, critical
response thresholds, endemic-state prediction via conserved quantities,
spectral stability analysis, and a stochastic network oracle."""

__version__ = "0.1.0"

from .dde_core import (DEFAULT_STEP, DelaySpec, History, Trajectory,
                       constant_history, integrate, sample)
from .equilibria import (EndemicPoint, Thresholds, critical_identification_time,
                         critical_probability, critical_time_days,
                         effective_R, endemic_point,
                         predict_endemic_from_history, q_critical, reachable,
                         seiq_endemic_point, tau_critical_at_q, thresholds)
from .errors import SiqError
from .net_sim import (MeanFieldMap, Network, NetworkSeries, SimConfig,
                      average_runs, complete_network, erdos_renyi_network,
                      mean_field_params, network_from_edge_list,
                      simulate_network)
from .siq_model import (DiseaseSpec, ModelParams, ValidationReport,
                        conserved_H, conserved_H_star, load_disease_table,
                        outbreak_history, seiq_field, simulate, siq_field,
                        siq_field_kappa_inf, validate_history)
from .spectral import (AsymptoticSpectrum, Box, CharEq, HopfData,
                       SpectralReport, StabilityMap, asymptotic_spectrum_tau0,
                       char_eval, count_unstable, default_box,
                       disease_free_chareq, e0_hopf_bound, endemic_chareq,
                       hopf_crossings, hopf_kappa0, hopf_sequence,
                       seiq_disease_free_chareq, stability_map,
                       strong_spectrum_tau0)
