"""
Global configuration file for storing default parameters.

Units follow the kilogram-millimetre-millisecond system throughout, so forces
are in kg·mm/ms² (kN), moments in kN·mm and frequencies in kHz. Values shown
in Hz are converted only at the reporting boundary.
"""

# Identified Young modulus of the steel ruler (kg/ms²/mm)
BEAM_YOUNG_MODULUS = 217.0

# Density (kg/mm³)
BEAM_DENSITY = 8.21e-6

# Cross section width and thickness (mm)
BEAM_WIDTH = 25.4
BEAM_THICKNESS = 1.0

# Free length of the cantilever (mm)
BEAM_LENGTH = 530.0

# Mass- and stiffness-proportional damping coefficients (1/ms, ms)
BEAM_ZETA_M = 0.0009
BEAM_ZETA_K = 0.07

# Uniform mesh, 10 mm elements so every candidate interface is a node
MESH_ELEMENTS = 53

# Interface position measured from the clamp (mm), giving L_P = 360 mm
INTERFACE_POSITION = 170.0

# Condition number of D_bb above which condensation is refused
NEAR_POLE_CONDITION = 1e12

# Operating band of the sweep experiments (Hz)
SWEEP_START_HZ = 16.0
SWEEP_STOP_HZ = 19.0
SWEEP_STEP_HZ = 0.1

# Periods collected per measurement window
N_PERIODS = 30

# Residual norm variation accepted as steady state (mm)
TRANSIENT_TOLERANCE = 0.013

# Residual norm accepted as a converged solution (mm)
CONVERGENCE_TOLERANCE = 0.02

# Iterations before a point is declared non-convergent
MAX_ITERATIONS = 100

# Measurement windows waited at most per voltage update
MAX_BLOCKS = 10

# Highest harmonic included in the residual
HIGHEST_HARMONIC = 1

# Phase advance applied to the filtered force channels (rad)
COMPENSATION_ANGLE = 0.06

# Target interface amplitude used to calibrate the external force (mm)
TARGET_INTERFACE_AMPLITUDE = 1.0

# Sampling period of the acquisition (ms), 5 kHz
SAMPLE_PERIOD = 0.2

# Laser separation and strain gauge positions from the interface (mm)
LASER_SEPARATION = 30.0
GAUGE_POSITION_1 = 10.0
GAUGE_POSITION_2 = 30.0

# Power supply disturbance (kHz) and its amplitude relative to the gauge signal
MAINS_FREQUENCY = 0.05
MAINS_RATIO = 5.0

# White gauge noise standard deviation relative to the gauge signal
WHITE_NOISE_RATIO = 0.02

# Anti-aliasing filter on the gauge channels
FILTER_CUTOFF = 0.5
FILTER_DAMPING = 0.856

# Rigid clamp carried by the shakers
CLAMP_MASS = 0.2
CLAMP_INERTIA = 50.0
CLAMP_SPRING = 0.035
CLAMP_DASHPOT = 3e-4
LEVER_ARM_FRONT = 60.0
LEVER_ARM_BACK = 60.0

# Shaker gain (kN/V) and first-order lag (ms)
ACTUATOR_GAIN = 0.1
ACTUATOR_LAG = 1.0

# Stability study: root search box and delays of the four-panel root plot
STABILITY_DELTA_RANGE = (-4.0, 4.0)
STABILITY_FREQ_RANGE = (0.0, 3.0)
STABILITY_ROOT_DELAYS = (0.0, 1.2, 1.75, 2.3)
STABILITY_CUTOFFS = (0.5, 0.33, 0.25)
STABILITY_TAU_MAX = 5.0

# Default random seed for every noise source
DEFAULT_SEED = 1234

# Output directory for CSV files and generated plot scripts
OUTPUT_DIR = "results"
