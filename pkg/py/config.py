import os

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")
SCENES_DIR = os.path.join(DATA_DIR, "scenes")
COMPOSED_SCENE_PATH = os.path.join(SCENES_DIR, "composed.json")
ALIASING_NEAR_PATH = os.path.join(SCENES_DIR, "aliasing_near.json")
ALIASING_FAR_PATH = os.path.join(SCENES_DIR, "aliasing_far.json")

# geometry tolerances
ON_SURFACE_TOL = 1e-6           # relative to radius
UNIT_TOL = 1e-6
ORTHO_TOL = 1e-9
HEMISPHERE_TOL = 1e-6
POLE_FRAME_TOL = 1e-6           # |y x N| below this uses the x-axis fallback
PROJECTION_EPS = 1e-9           # |d - (d.e_y)e_y| below this gives s = 0.5
RAY_T_MIN = 1e-6
GRAZE_TOL = 1e-12               # discriminant within this of zero counts as a hit

# material defaults
AMBIENT = 0.1
DIFFUSE = 0.7
SPECULAR = 0.2
SHININESS = 32.0
LIGHT_INTENSITY = (1.0, 1.0, 1.0)
HARD_SHADOWS = True
SHADOW_BIAS = 1e-4

NAMED_COLORS = {
    "white": (1.0, 1.0, 1.0),
    "red": (1.0, 0.0, 0.0),
    "purple": (0.5, 0.0, 0.5),
    "blue": (0.0, 0.0, 1.0),
    "black": (0.05, 0.05, 0.05),
    "green": (0.0, 1.0, 0.0),
    "yellow": (1.0, 1.0, 0.0),
}
BACKGROUND = (0.0, 0.0, 0.0)

# proxy model used when neither a scene nor --diameter is given
MODEL_CENTER = (0.0, 0.0, 0.0)
MODEL_DIAMETER = 7.0

# synthesis
SYNTH_DIMS = (512, 256, 32, 32)
SUPERSAMPLE = 7
SUPERSAMPLE_MODE = "latin"
SEED = 0
CHANNELS = "RGB8"
SYNTH_ORIGIN_NUDGE = 1e-4
SYNTH_CHUNK_TEXELS = 1 << 16    # fixed work unit; never derived from the thread count

# render
FOV = 60.0
IMAGE_SIZE = (256, 256)
TILE_ROWS = 16
GAMMA = 2.2
SHARED_VIEW_DIRECTION = False
RENDER_LINEARITY_TOL = 0.15    # seconds per covered pixel may vary this much across image sizes

# luminance weights for gradient energy
LUMA = (0.2126, 0.7152, 0.0722)
PIXEL_MAX = 255.0

# five observer poses of the resolution comparison: (position, direction)
RESOLUTION_POSES = [
    ((10.0, 0.0, 0.0), (-3.0, 0.0, 0.0)),
    ((10.0, 0.0, -3.0), (-3.0, 0.0, 0.0)),
    ((10.0, 0.0, 3.0), (-3.0, 0.0, 0.0)),
    ((0.0, 0.0, 10.0), (0.0, 0.0, -3.0)),
    ((0.0, 10.0, 0.0), (0.0, -3.0, 0.0)),
]
SWEEP_DIMS = [
    (1024, 512, 128, 128),
    (512, 256, 32, 32),
    (64, 32, 256, 256),
    (512, 256, 64, 64),
]
SPATIAL_LADDER = [(128, 64), (256, 128), (512, 256)]
SPATIAL_LADDER_ANGULAR = (32, 32)
ANGULAR_LADDER = [(16, 16), (32, 32), (64, 64)]
ANGULAR_LADDER_SPATIAL = (256, 128)
LADDER_SUPERSAMPLE = 3

# aliasing experiment
ALIASING_DIMS = (1024, 512, 32, 32)
ALIASING_POSE = ((5.0, 0.0, 0.0), (-2.0, 0.0, 0.0))
ALIASING_MIN_DROP = 0.2         # far region energy must be at least 20% lower

# benchmark
BENCH_FRAMES = 30
BENCH_SIZE = (256, 256)
BENCH_POSE = ((10.0, 0.0, 0.0), (-3.0, 0.0, 0.0))

THREADS_ENV = "LF_THREADS"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_VALIDATION = 4
EXIT_THRESHOLD = 5
