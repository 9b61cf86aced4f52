# #####################################################
# ################## BASIC Settings ###################
# #####################################################
# Every item below can be overridden from the command line, either with its own
# flag or with `--set key=value` (eg: --set sampler.cell_size=40).
# Run `python main.py config-help` for the full list.

# ############## Paths ##############
# Directory of color-coded instance masks (PNG), one cell = one color region,
#   touching cells must have different colors
input_dir = "masks"

# The shape database written by `build-db` and read by `generate`
db_path = "shape_db.json"

# Generated masks (PNG), their JSON sidecars and reports go here
output_dir = "output"

# Background color of the input masks. None: the most frequent color of each mask
ingest_background = None

# Skip masks that break the coloring rule during `build-db` (they are listed in the report)
keep_going = False

# ############## Synthesis Settings ##############
# Size of the generated masks. None: the most common size among the training masks
width = None
height = None

# Cell count distribution Norm(mu_n, sigma_n). None: measured on the training masks
mu_n = None
sigma_n = None

# Fixed cells per mask instead of the normal draw. None: draw it
count = None

# How many masks one `generate` run writes
batch_count = 1

# Base seed, mask k uses seed + k. None: random, echoed into the sidecars
seed = None

# 'adhesion': cells tend to stick to previously placed ones (probability map)
# 'uniform-random': every cell is located uniformly, for comparison
strategy = "adhesion"

# Probability map
#   cell_size: mean cell size in pixels, the excitation is reverted inside it
#              None takes the mean bounding box side of the database cells
#   sigma: None derives it from cell_size (half width at half maximum = cell_size)
#   n_init: cells placed at random before the map takes over
sampler = dict(
    cell_size=None,
    sigma=None,
    n_init=20,
    support_radius=None,
    zero_occupied=False,
)

# Shape augmentation
augmentation = dict(
    rotation=(0, 360),
    scale=(0.8, 1.2),
    flip_horizontal_prob=0.5,
    flip_vertical_prob=0.5,
)

# Background and cell colors of generated masks
background = (0, 0, 0)
palette = (
    (255, 0, 0),
    (0, 255, 0),
    (0, 0, 255),
    (255, 255, 0),
    (255, 0, 255),
    (0, 255, 255),
    (255, 128, 0),
    (128, 0, 255),
    (0, 255, 128),
    (255, 0, 128),
    (128, 255, 0),
    (0, 128, 255),
)

# #####################################################
# ################ ADVANCED Settings ##################
# #####################################################

# Retry budget per cell: locations per shape, then one fresh shape, then the cell is given up
max_location_retries = 100
max_color_retries = 20

# Cap the cell count so the expected coverage stays below 60% of the canvas
density_cap = 0.6

# Also write the final probability map of every mask
dump_maps = False

# Evaluation
objectness_threshold = 0.5
contour_threshold = 0.5
min_blob_size = 50
contour_width = 2
iou_threshold = 0.5
histogram_bins = 20

# ############## Output Settings ##############
# Verbose level (0~4) 0:important and error 1:warning 2:info 3/4:debug. Default is 2
verbose_level = 2

# Progress bar on stderr while generating
progress = True

# Parallel generation jobs. Left unset, the HEMOGEN_THREADS environment variable (else 1) is used
# parallelism = 4
