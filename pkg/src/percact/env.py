"""Discrete perception-action tasks.

A :class:`WorldModel` bundles a prior over world states, a utility table
U(world, action) and an encoder that turns a world index into the real-valued
vector fed to the perceptual network.  Two tasks ship with the package: the
predator-prey problem (binary-coded animal identities) and the mug-lifting
problem (synthetic 16x12 camera bitmaps).
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Predator-prey layout: 6 small prey, 5 medium prey, 4 large predators.
N_SMALL, N_MEDIUM, N_LARGE = 6, 5, 4
SMALL = tuple(range(0, N_SMALL))
MEDIUM = tuple(range(N_SMALL, N_SMALL + N_MEDIUM))
LARGE = tuple(range(N_SMALL + N_MEDIUM, N_SMALL + N_MEDIUM + N_LARGE))
# actions 0..5 hunt a specific small animal, 6..10 a specific medium one
GENERIC_HUNT = N_SMALL + N_MEDIUM
FLEE = GENERIC_HUNT + 1

SMALL_HUNT_UTILITY = 8.0
# hunting a neighbouring small animal still pays, less per index step apart
SMALL_HUNT_FALLOFF = 0.5
MEDIUM_HUNT_UTILITY = 3.0
FLEE_UTILITY = 3.0

MUGS = ("m0", "mL", "mR", "m2")
MUG_ACTIONS = ("a0", "aL", "aR", "a2")
# preferred-action utility; two-hand lift of a one-handle mug earns 60% of it
MUG_UTILITY_SCALE = 6.0
MUG_EFFORT_FRACTION = 0.6
IMAGE_SHAPE = (12, 16)  # rows x columns; flattened row-major to 192


class Encoder:
    """Deterministic map from world index to input vector, with optional noise."""

    dim: int

    def __call__(self, world, rng=None):
        raise NotImplementedError

    def clean(self, world):
        return self(world, None)


class BinaryEncoder(Encoder):
    """Little-endian bits of the world index, clear bits mapped to ``low``.

    The default ``low=-1`` gives signed bits.  With ``low=0`` world 0 encodes to
    the zero vector, which a bias-free network can only map to the uniform
    percept distribution.
    """

    def __init__(self, n_bits, low=-1.0):
        self.dim = int(n_bits)
        self.low = float(low)

    def __call__(self, world, rng=None):
        bits = np.array([(world >> b) & 1 for b in range(self.dim)], dtype=float)
        return np.where(bits > 0, 1.0, self.low)


class BitmapEncoder(Encoder):
    """One flattened template per world; each pixel flips with ``flip_prob``."""

    def __init__(self, templates, flip_prob=0.0):
        templates = np.asarray(templates, dtype=float)
        if templates.ndim == 3:
            templates = templates.reshape(templates.shape[0], -1)
        self.templates = templates
        self.templates.setflags(write=False)
        self.flip_prob = float(flip_prob)
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")
        self.dim = templates.shape[1]

    def __call__(self, world, rng=None):
        img = self.templates[world].copy()
        if self.flip_prob > 0.0 and rng is not None:
            flips = rng.random(self.dim) < self.flip_prob
            img[flips] = 1.0 - img[flips]
        return img

    def clean(self, world):
        return self.templates[world].copy()


@dataclass(frozen=True)
class WorldModel:
    prior: np.ndarray
    utility: np.ndarray
    encoder: Encoder = field(repr=False)
    name: str = "custom"

    def __post_init__(self):
        prior = np.array(self.prior, dtype=float)
        utility = np.array(self.utility, dtype=float)
        if prior.ndim != 1 or np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-12:
            raise ValueError("prior must be a nonnegative vector summing to 1")
        if utility.ndim != 2 or utility.shape[0] != prior.shape[0]:
            raise ValueError(f"utility shape {utility.shape} does not match {prior.shape[0]} worlds")
        if not np.all(np.isfinite(utility)):
            raise ValueError("utility entries must be finite")
        prior.setflags(write=False)
        utility.setflags(write=False)
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "utility", utility)

    @property
    def n_worlds(self):
        return self.prior.shape[0]

    @property
    def n_actions(self):
        return self.utility.shape[1]

    @property
    def input_dim(self):
        return self.encoder.dim

    def clean_inputs(self):
        """Noise-free encodings of every world, shape (n_worlds, input_dim)."""
        return np.vstack([self.encoder.clean(w) for w in range(self.n_worlds)])


def sample_world(model, rng):
    cdf = np.cumsum(model.prior)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, model.n_worlds - 1)


def encode(model, world, rng=None):
    if not 0 <= world < model.n_worlds:
        raise IndexError(f"world {world} out of range for {model.n_worlds} worlds")
    return model.encoder(world, rng)


def predator_prey_utility():
    """15 x 13 table with small / medium / large animal groups.

    Small animals each have one best specific hunt, and the hunts meant for
    nearby small animals pay a little less; medium animals reward their
    specific hunt and the shared generic hunt equally; large animals reward
    only fleeing.
    """
    U = np.zeros((N_SMALL + N_MEDIUM + N_LARGE, FLEE + 1))
    for i, w in enumerate(SMALL):
        for k in range(N_SMALL):
            U[w, k] = max(0.0, SMALL_HUNT_UTILITY - SMALL_HUNT_FALLOFF * abs(i - k))
    for k, w in enumerate(MEDIUM):
        U[w, N_SMALL + k] = MEDIUM_HUNT_UTILITY
        U[w, GENERIC_HUNT] = MEDIUM_HUNT_UTILITY
    for w in LARGE:
        U[w, FLEE] = FLEE_UTILITY
    return U


def predator_prey_task(utility=None, prior=None):
    U = predator_prey_utility() if utility is None else np.asarray(utility, dtype=float)
    n = U.shape[0]
    p = np.full(n, 1.0 / n) if prior is None else prior
    n_bits = max(1, int(np.ceil(np.log2(n))))
    return WorldModel(p, U, BinaryEncoder(n_bits), name="predator_prey")


def mug_utility(scale=MUG_UTILITY_SCALE):
    U = np.eye(4) * scale
    U[1, 3] = U[2, 3] = MUG_EFFORT_FRACTION * scale
    return U


def mug_templates():
    """Hand-drawn 12 x 16 binary bitmaps for m0, mL, mR, m2."""
    body = np.zeros(IMAGE_SHAPE)
    body[3:10, 6:10] = 1.0  # mug body, 7 rows x 4 columns
    left = np.zeros(IMAGE_SHAPE)
    left[4:8, 3:6] = 1.0
    left[5:7, 4] = 0.0  # handle opening
    right = left[:, ::-1].copy()
    return np.stack([body, body + left, body + right, body + left + right])


def mug_task(flip_prob=0.0, templates=None, utility=None):
    t = mug_templates() if templates is None else np.asarray(templates, dtype=float)
    U = mug_utility() if utility is None else np.asarray(utility, dtype=float)
    return WorldModel(np.full(4, 0.25), U, BitmapEncoder(t, flip_prob), name="mug")


# --- plain-text file formats ----------------------------------------------


def load_utility(path):
    """Read 'omega actions' header followed by |W| rows of |A| reals."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    n_w, n_a = (int(v) for v in lines[0].split())
    rows = [[float(v) for v in ln.split()] for ln in lines[1 : 1 + n_w]]
    U = np.array(rows, dtype=float)
    if U.shape != (n_w, n_a):
        raise ValueError(f"{path}: expected {n_w}x{n_a} utility table, got {U.shape}")
    return U


def save_utility(path, utility):
    utility = np.asarray(utility, dtype=float)
    body = "\n".join(" ".join(repr(float(v)) for v in row) for row in utility)
    Path(path).write_text(f"{utility.shape[0]} {utility.shape[1]}\n{body}\n")


def load_prior(path):
    values = Path(path).read_text().split()
    return np.array([float(v) for v in values], dtype=float)


def load_template(path):
    """12 lines of 16 '0'/'1' characters."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    img = np.array([[float(c) for c in ln] for ln in lines], dtype=float)
    if img.shape != IMAGE_SHAPE or not np.isin(img, (0.0, 1.0)).all():
        raise ValueError(f"{path}: expected a {IMAGE_SHAPE[0]}x{IMAGE_SHAPE[1]} 0/1 bitmap")
    return img


def save_template(path, img):
    img = np.asarray(img).reshape(IMAGE_SHAPE)
    Path(path).write_text("\n".join("".join(str(int(v)) for v in row) for row in img) + "\n")


def load_task(directory, flip_prob=0.0):
    """Task from a directory holding ``utility.txt`` and optionally ``prior.txt``.

    Bitmap templates ``template_0.txt`` .. ``template_{n-1}.txt`` select a bitmap
    encoder; without them worlds are binary-coded.
    """
    directory = Path(directory)
    U = load_utility(directory / "utility.txt")
    prior_path = directory / "prior.txt"
    prior = load_prior(prior_path) if prior_path.exists() else np.full(U.shape[0], 1.0 / U.shape[0])
    tpaths = [directory / f"template_{w}.txt" for w in range(U.shape[0])]
    if all(p.exists() for p in tpaths):
        encoder = BitmapEncoder(np.stack([load_template(p) for p in tpaths]), flip_prob)
    else:
        encoder = BinaryEncoder(max(1, int(np.ceil(np.log2(U.shape[0])))))
    return WorldModel(prior, U, encoder, name=f"file:{directory}")
