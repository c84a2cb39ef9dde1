"""Similarity-based data selection and gridding reconstruction for
free-running 3D radial MRI, plus a dynamic analytical phantom and an
image-quality evaluation suite."""

from .trajectory import (RadialTrajectory, UniformityReport,
                         generate_phyllotaxis, great_circle_uniformity,
                         radial_nyquist_fraction)
from .phantom import (CoilProfile, Ellipsoid, GroundTruthLabels, KSpaceData,
                      PhantomScene, default_scene, ground_truth_bins,
                      motion_state, sample_kspace)
from .reference import ReferenceMatrix, build_reference_matrix, si_projection
from .pca import ReducedMatrix, reduce, reduce_reference
from .cluster import (ClusterAssignment, expand_to_readouts, kmeans,
                      kmeans_pp_init, select_k)
from .recon import (GriddingConfig, Volume, density_compensation,
                    grid_nufft, reconstruct, refine_density_weights,
                    sos_combine)
from .metrics import (ProvenanceReport, SharpnessResult, SigmoidFit,
                      contrast_ratio, interface_sharpness, provenance,
                      sigmoid_fit, snr_cnr)
from .config import RunConfig, load_config
from .pipeline import run_alldata, run_simba, similarity_select

__version__ = "0.1.0"
