import importlib.util
import json
import os

from hemogen_core import CONSTS
from hemogen_core.augment import AugmentationConfig
from hemogen_core.errors import ConfigError
from hemogen_core.sampler import SamplerParams
from hemogen_core.shares import logger
from hemogen_core.synth import STRATEGIES, SynthesisConfig
from utils.util import canonical_json, find_best_match, sha256_hex

SAMPLER_KEYS = ("cell_size", "sigma", "n_init", "support_radius", "zero_occupied")
AUGMENTATION_KEYS = ("rotation", "scale", "flip_horizontal_prob", "flip_vertical_prob")
# settings that never change what a run produces, left out of the echoed run config
RUNTIME_KEYS = ("output_dir", "parallelism", "verbose_level", "progress")


def default_parallelism():
    raw = os.environ.get(CONSTS.ENV_THREADS)
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        logger.warn(f"{CONSTS.ENV_THREADS}={raw!r} is not an integer, using 1")
        return 1
    return max(1, value)


class Config:
    def __init__(self, conf_path=None, **kwargs) -> None:
        """
        Configurations for building shape databases, generating masks and evaluating outputs

        Args:
         - conf_path: path to the config file, a python module (like `config.py`) or a json file
           (a json file may also be a generated mask's sidecar, its echoed config is reused)
         - kwargs: key-value pairs, will override the config file
           supported config items and help infomation can be found by calling `config_instance.help()`
        """
        self.__set_default_configs()

        user_confs = {}
        if conf_path is not None:
            user_confs.update(self.__load_config_from_file(conf_path))
        user_confs.update(kwargs)
        self.update(user_confs)

    def update(self, confs: dict):
        """
        apply key-value pairs; dotted keys ("sampler.cell_size") address nested groups
        unknown keys are discarded with a warning
        """
        supported_props = self.__get_settable_properties()
        for k, v in confs.items():
            group, _, sub_key = k.partition(".")
            if sub_key and group in ("sampler", "augmentation"):
                setattr(self, group, {sub_key: v})
            elif k in supported_props:
                setattr(self, k, v)
            else:
                # find the most similar one
                guess = find_best_match(k, supported_props)
                guess = "" if guess is None else "do you mean " + guess + "?"
                logger.warn(f"unsupported config item: {k}, discarded. {guess}")
        return self

    def __load_config_from_file(self, conf_path: str) -> dict:
        if not os.path.exists(conf_path):
            raise FileNotFoundError(f"Config file not found: {conf_path}")
        if conf_path.endswith(".json"):
            with open(conf_path, "r", encoding="utf-8") as fp:
                conf_dict = json.load(fp)
            if not isinstance(conf_dict, dict):
                raise ConfigError(f"a json config must hold an object, got: {conf_path}")
            # a sidecar echoes the resolved run config under "run"
            if "run" in conf_dict and isinstance(conf_dict["run"], dict):
                conf_dict = conf_dict["run"]
            elif "config" in conf_dict and isinstance(conf_dict["config"], dict):
                conf_dict = conf_dict["config"]
            return conf_dict
        if not conf_path.endswith(".py"):
            raise ConfigError(f"Only support python or json config file, got: {conf_path}")
        # load config from file
        spec = importlib.util.spec_from_file_location("hemogen_user_config", conf_path)
        module = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(module)
        # remove the magic variables and imported modules
        conf_dict = {
            k: v for k, v in module.__dict__.items() if not k.startswith("__") and not hasattr(v, "__spec__")
        }
        return conf_dict

    def __set_default_configs(self):
        ######### paths #########
        self._input_dir = "masks"
        self._db_path = "shape_db.json"
        self._output_dir = "output"
        self._ingest_background = None
        self._keep_going = False

        ######### synthesis settings #########
        # None means taken from the shape database stats
        self._width = None
        self._height = None
        self._mu_n = None
        self._sigma_n = None
        self._count = None
        self._batch_count = 1
        self._seed = None
        self._strategy = "adhesion"
        self._palette = tuple(CONSTS.DEFAULT_PALETTE)
        self._background = tuple(CONSTS.DEFAULT_BACKGROUND)
        self._sampler = dict(
            cell_size=None,
            sigma=None,
            n_init=CONSTS.DEFAULT_N_INIT,
            support_radius=None,
            zero_occupied=False,
        )
        self._augmentation = dict(
            rotation=(0.0, 360.0),
            scale=(0.8, 1.2),
            flip_horizontal_prob=0.5,
            flip_vertical_prob=0.5,
        )
        self._max_location_retries = 100
        self._max_color_retries = 20
        self._density_cap = 0.6
        self._dump_maps = False

        ######### evaluation settings #########
        self._objectness_threshold = 0.5
        self._contour_threshold = 0.5
        self._min_blob_size = 50
        self._contour_width = 2
        self._iou_threshold = 0.5
        self._histogram_bins = 20

        ######### advanced settings #########
        self._parallelism = default_parallelism()
        self._verbose_level = 2
        self._progress = True

    def __get_all_properties(self):
        cls = self.__class__
        props = []
        for name in dir(cls):
            attr = getattr(cls, name)
            if isinstance(attr, property):
                props.append(name)
        return props

    def __get_settable_properties(self):
        cls = self.__class__
        return [name for name in self.__get_all_properties() if getattr(cls, name).fset is not None]

    def help(self):
        """
        print out the doc string for each setting item
        """
        # Get a list of all properties and their docstrings
        props = self.__get_settable_properties()
        prop_docs = []
        cls = self.__class__
        for name in props:
            attr = getattr(cls, name)
            doc_string = attr.__doc__ or ""
            prop_docs.append((name, doc_string.strip()))
        for name, doc in prop_docs:
            print(f"{name}:")
            print(f"\t{doc}")
            print()

    def to_dict(self) -> dict:
        """the fully resolved configuration"""
        out = {}
        for name in self.__get_settable_properties():
            value = getattr(self, name)
            if isinstance(value, tuple):
                value = [list(v) if isinstance(v, tuple) else v for v in value]
            elif isinstance(value, dict):
                value = {k: list(v) if isinstance(v, tuple) else v for k, v in value.items()}
            out[name] = value
        return out

    def run_dict(self) -> dict:
        """to_dict() without the runtime-only settings, echoed into every sidecar"""
        return {k: v for k, v in self.to_dict().items() if k not in RUNTIME_KEYS}

    @property
    def config_hash(self):
        return sha256_hex(canonical_json(self.run_dict()))

    def synthesis_config(self, stats=None) -> SynthesisConfig:
        """
        Build the synthesis parameters; keys left at None fall back to the dataset stats.

        :type stats: hemogen_core.maskdb.DatasetStats
        """

        def pick(value, stat_name, default):
            if value is not None:
                return value
            if stats is not None:
                return getattr(stats, stat_name)
            return default

        sampler = self.sampler
        sampler["cell_size"] = pick(sampler["cell_size"], "mean_cell_extent", CONSTS.DEFAULT_CELL_SIZE)
        if sampler["cell_size"] <= 0:
            # a database without cells has no extent
            sampler["cell_size"] = CONSTS.DEFAULT_CELL_SIZE

        return SynthesisConfig(
            width=int(pick(self.width, "image_width", CONSTS.DEFAULT_WIDTH)),
            height=int(pick(self.height, "image_height", CONSTS.DEFAULT_HEIGHT)),
            mu_n=float(pick(self.mu_n, "mu_n", CONSTS.DEFAULT_MU_N)),
            sigma_n=float(pick(self.sigma_n, "sigma_n", CONSTS.DEFAULT_SIGMA_N)),
            count=self.count,
            sampler=SamplerParams(**sampler),
            augmentation=AugmentationConfig(
                rotation=tuple(self.augmentation["rotation"]),
                scale=tuple(self.augmentation["scale"]),
                flip_horizontal_prob=self.augmentation["flip_horizontal_prob"],
                flip_vertical_prob=self.augmentation["flip_vertical_prob"],
            ),
            palette=self.palette,
            background=self.background,
            max_location_retries=self.max_location_retries,
            max_color_retries=self.max_color_retries,
            strategy=self.strategy,
            seed=self.seed,
            density_cap=self.density_cap,
        )

    def __repr__(self) -> str:
        return f"<Config {self.to_dict()}>"

    def __str__(self) -> str:
        output = "configurations:\n"
        for k, v in self.to_dict().items():
            output += f"{k} = {v}\n"
        return output

    ######### paths #########

    @property
    def input_dir(self):
        """
        Directory holding the color-coded instance masks (PNG) for `build-db`
        """
        return self._input_dir

    @input_dir.setter
    def input_dir(self, value):
        self._input_dir = value

    @property
    def db_path(self):
        """
        Shape database file, written by `build-db`, read by `generate` and `stats`
        """
        return self._db_path

    @db_path.setter
    def db_path(self, value):
        self._db_path = value

    @property
    def output_dir(self):
        """
        Where generated masks, sidecars and reports are written
        """
        return self._output_dir

    @output_dir.setter
    def output_dir(self, value):
        self._output_dir = value

    @property
    def ingest_background(self):
        """
        Background RGB color of the input masks, eg: (0, 0, 0)
        None: the most frequent color of every mask is its background
        """
        return self._ingest_background

    @ingest_background.setter
    def ingest_background(self, value):
        self._ingest_background = None if value is None else _rgb(value, "ingest_background")

    @property
    def keep_going(self):
        """
        Skip invalid masks during `build-db` instead of failing (they are still reported)
        """
        return self._keep_going

    @keep_going.setter
    def keep_going(self, value):
        self._keep_going = bool(value)

    ######### synthesis settings #########

    @property
    def width(self):
        """
        Generated mask width in pixels, None for the most common width of the training masks
        """
        return self._width

    @width.setter
    def width(self, value):
        self._width = _positive_int_or_none(value, "width")

    @property
    def height(self):
        """
        Generated mask height in pixels, None for the most common height of the training masks
        """
        return self._height

    @height.setter
    def height(self, value):
        self._height = _positive_int_or_none(value, "height")

    @property
    def mu_n(self):
        """
        Mean cell count per mask, None to use the value measured on the training masks (669 on the reference set)
        """
        return self._mu_n

    @mu_n.setter
    def mu_n(self, value):
        self._mu_n = None if value is None else float(value)

    @property
    def sigma_n(self):
        """
        Standard deviation of the cell count, None to use the measured value (149 on the reference set)
        """
        return self._sigma_n

    @sigma_n.setter
    def sigma_n(self, value):
        self._sigma_n = None if value is None else float(value)

    @property
    def count(self):
        """
        Fixed number of cells per mask, skips the normal draw. None (default) draws it.
        """
        return self._count

    @count.setter
    def count(self, value):
        self._count = None if value is None else int(value)

    @property
    def batch_count(self):
        """
        How many masks `generate` writes
        """
        return self._batch_count

    @batch_count.setter
    def batch_count(self, value):
        value = int(value)
        if value < 1:
            raise ConfigError(f"batch_count must be >= 1, got {value}")
        self._batch_count = value

    @property
    def seed(self):
        """
        Base seed, mask k of a batch uses seed + k. None picks a random base, which is echoed in every sidecar
        """
        return self._seed

    @seed.setter
    def seed(self, value):
        self._seed = None if value is None else int(value)

    @property
    def strategy(self):
        """
        'adhesion' (probability map driven placement) or 'uniform-random' (every cell placed uniformly)
        """
        return self._strategy

    @strategy.setter
    def strategy(self, value):
        if value not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {value!r}")
        self._strategy = value

    @property
    def palette(self):
        """
        Cell colors, a list of at least 2 distinct RGB triples. Touching cells never share a color.
        """
        return self._palette

    @palette.setter
    def palette(self, value):
        self._palette = tuple(_rgb(c, "palette") for c in value)

    @property
    def background(self):
        """
        Background RGB color of generated masks
        """
        return self._background

    @background.setter
    def background(self, value):
        self._background = _rgb(value, "background")

    @property
    def sampler(self):
        """
        Probability map settings, a dict with
            cell_size: radius of the reverted excitation core in pixels, None for the
                mean bounding box side of the database cells (46 without a database)
            sigma: gaussian sigma, None for cell_size / sqrt(2 ln 2)
            n_init: cells placed uniformly before the map is used (default 20)
            support_radius: gaussian truncation radius, None for ceil(3 sigma)
            zero_occupied: also force the map to zero on occupied pixels (default False)
        assigning a dict only updates the given keys
        """
        return dict(self._sampler)

    @sampler.setter
    def sampler(self, value):
        self._sampler = _merge_group("sampler", self._sampler, value, SAMPLER_KEYS)

    @property
    def augmentation(self):
        """
        Shape augmentation settings, a dict with
            rotation: (low, high) degrees, default (0, 360)
            scale: (low, high) factor, default (0.8, 1.2)
            flip_horizontal_prob, flip_vertical_prob: default 0.5
        assigning a dict only updates the given keys
        """
        return dict(self._augmentation)

    @augmentation.setter
    def augmentation(self, value):
        merged = _merge_group("augmentation", self._augmentation, value, AUGMENTATION_KEYS)
        for key in ("rotation", "scale"):
            merged[key] = tuple(float(v) for v in merged[key])
        self._augmentation = merged

    @property
    def max_location_retries(self):
        """
        Locations tried per shape before a fresh shape is drawn
        """
        return self._max_location_retries

    @max_location_retries.setter
    def max_location_retries(self, value):
        self._max_location_retries = int(value)

    @property
    def max_color_retries(self):
        """
        Color exhaustions tolerated per shape before a fresh shape is drawn
        """
        return self._max_color_retries

    @max_color_retries.setter
    def max_color_retries(self, value):
        self._max_color_retries = int(value)

    @property
    def density_cap(self):
        """
        The cell count is capped so the expected coverage stays below this fraction of the canvas
        """
        return self._density_cap

    @density_cap.setter
    def density_cap(self, value):
        self._density_cap = float(value)

    @property
    def dump_maps(self):
        """
        Also write the final probability map of every mask (.npy raster + false color .png)
        """
        return self._dump_maps

    @dump_maps.setter
    def dump_maps(self, value):
        self._dump_maps = bool(value)

    ######### evaluation settings #########

    @property
    def objectness_threshold(self):
        """
        `eval instances`: objectness values >= this are foreground
        """
        return self._objectness_threshold

    @objectness_threshold.setter
    def objectness_threshold(self, value):
        self._objectness_threshold = float(value)

    @property
    def contour_threshold(self):
        """
        `eval instances`: contour values >= this split instances
        """
        return self._contour_threshold

    @contour_threshold.setter
    def contour_threshold(self, value):
        self._contour_threshold = float(value)

    @property
    def min_blob_size(self):
        """
        `eval instances`: blobs smaller than this (pixels) are discarded
        """
        return self._min_blob_size

    @min_blob_size.setter
    def min_blob_size(self, value):
        self._min_blob_size = int(value)

    @property
    def contour_width(self):
        """
        Width in pixels of the contour band between touching cells
        """
        return self._contour_width

    @contour_width.setter
    def contour_width(self, value):
        self._contour_width = int(value)

    @property
    def iou_threshold(self):
        """
        `eval ap`: a detection matches a ground truth box at IoU >= this
        """
        return self._iou_threshold

    @iou_threshold.setter
    def iou_threshold(self, value):
        value = float(value)
        if not 0.0 < value <= 1.0:
            raise ConfigError(f"iou_threshold must be in (0, 1], got {value}")
        self._iou_threshold = value

    @property
    def histogram_bins(self):
        """
        `eval adhesion`: bins of the nearest neighbor distance histogram
        """
        return self._histogram_bins

    @histogram_bins.setter
    def histogram_bins(self, value):
        self._histogram_bins = int(value)

    ######### advanced settings #########

    @property
    def parallelism(self):
        """
        Number of generation jobs run at once, defaults to the HEMOGEN_THREADS environment variable (else 1)
        the outputs do not depend on it
        """
        return self._parallelism

    @parallelism.setter
    def parallelism(self, value):
        value = int(value)
        if value < 1:
            raise ConfigError(f"parallelism must be >= 1, got {value}")
        self._parallelism = value

    @property
    def verbose_level(self):
        """
        Verbose level 0:important and error 1:warning 2:info 3/4:debug. Default is 2
        """
        return self._verbose_level

    @verbose_level.setter
    def verbose_level(self, value):
        self._verbose_level = int(value)

    @property
    def progress(self):
        """
        Show a progress bar on stderr while generating
        """
        return self._progress

    @progress.setter
    def progress(self, value):
        self._progress = bool(value)


def _rgb(value, name):
    try:
        rgb = tuple(int(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected an RGB triple, got {value!r}")
    if len(rgb) != 3 or not all(0 <= v <= 255 for v in rgb):
        raise ConfigError(f"{name}: expected an RGB triple of 0..255 values, got {value!r}")
    return rgb


def _positive_int_or_none(value, name):
    if value is None:
        return None
    value = int(value)
    if value < 1:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def _merge_group(name, current, value, keys):
    if not isinstance(value, dict):
        raise ConfigError(f"{name} must be a dict, got {value!r}")
    merged = dict(current)
    for k, v in value.items():
        if k in keys:
            merged[k] = v
        elif name == "sampler" and k == "a_schedule":
            # echoed by sidecars, only the harmonic schedule exists
            if v != "1/i":
                raise ConfigError(f"unsupported blending schedule: {v!r}")
        else:
            guess = find_best_match(k, keys)
            guess = "" if guess is None else "do you mean " + guess + "?"
            logger.warn(f"unsupported {name} item: {k}, discarded. {guess}")
    return merged
