"""Path planning and the iterative warp / inpaint engine.

A run is a sequence of planned steps over a shared canvas. Every step warps
already generated content into a new camera, estimates which warped pixels
are risky, erases the worst, pastes guide content from the opposite
generation direction into the to-inpaint region, calls the inpainting
backend, and commits the result first-write-wins.

Tasks:
  planar   single-row outward extension by fixed pixel shifts
  pano360  one 360 degree band on an equirect canvas, closed by a merge view
  full     pano360 band, then upward / downward expansion bands, then one
           closing view per pole
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, ContractViolationError, SequencingError
from .guidance import (
    DOWN,
    UP,
    SdeditParams,
    build_inpaint_request,
    extract_prior,
    paste_guidance,
)
from .imagecore import (
    EQUIRECT,
    PLANAR,
    CameraPose,
    Mask,
    PanoCanvas,
    RiskMap,
    RiskWeights,
    RowStats,
    ViewImage,
)
from .projection import (
    FIRST_WRITE_WINS,
    commit_view_inplace,
    planar_shift_field,
    planar_shift_warp,
    render_view,
    rotate_warp,
    rotate_warp_field,
    view_row_pitches,
)
from .risk import (
    MaskFilterParams,
    combine_risks,
    erase_by_risk,
    filter_mask,
    risk_color,
    risk_edge,
    risk_init,
    risk_smooth,
    update_row_stats,
)

logger = logging.getLogger(__name__)

TASK_PLANAR = "planar"
TASK_PANO360 = "pano360"
TASK_FULL = "full"
TASKS = (TASK_PLANAR, TASK_PANO360, TASK_FULL)

ROLE_INITIAL = "initial"
ROLE_FORWARD = "forward"
ROLE_BACKWARD = "backward"
ROLE_MERGE = "merge"
ROLE_EXPAND_UP = "expand_up"
ROLE_EXPAND_DOWN = "expand_down"
ROLE_POLE_CLOSE = "pole_close"
ROLE_FILL = "fill"

STAGE_PATH = "path"
STAGE_CENTRAL = "central"
STAGE_EXPAND_UP = "expand_up"
STAGE_EXPAND_DOWN = "expand_down"
STAGE_POLE_TOP = "pole_top"
STAGE_POLE_BOTTOM = "pole_bottom"
FULL_STAGES = (STAGE_CENTRAL, STAGE_EXPAND_UP, STAGE_EXPAND_DOWN, STAGE_POLE_TOP, STAGE_POLE_BOTTOM)

GAP_FILL_LIMIT = 64
_SEED_STRIDE = 1000003


@dataclass
class RunConfig:
    """Everything a run needs; per-task defaults come from for_task()."""

    task: str
    prompt: str = ""
    negative_prompt: Optional[str] = None
    seed: int = 0
    view_size: int = 512
    canvas_height: int = 2048
    canvas_width: int = 4096
    # planar path
    shift_px: int = 256
    path_steps: int = 5
    # primary band
    fov: float = 80.0
    stride: float = 40.0
    t0: float = 0.98
    guidance_scale: float = 7.5
    variance_scale: float = 1.0
    steps: int = 50
    erase_fraction: float = 0.05
    w_init: float = 0.8
    w_edge: float = 0.2
    w_color: float = 0.0
    w_smooth: float = 0.0
    # latitude expansion (full task)
    expand_pitch: float = 25.0
    expand_fov: float = 110.0
    expand_stride: float = 80.0
    expand_t0: float = 0.90
    expand_guidance: float = 2.0
    expand_variance: float = 1.05
    expand_erase: float = 0.10
    expand_w_init: float = 0.6
    expand_w_edge: float = 0.2
    expand_w_color: float = 0.1
    expand_w_smooth: float = 0.1
    # pole closing (full task)
    pole_fov: float = 90.0
    pole_t0: float = 0.90
    pole_guidance: float = 1.0
    pole_variance: float = 1.1
    pole_erase: float = 0.20
    pole_w_init: float = 0.6
    pole_w_edge: float = 0.2
    pole_w_color: float = 0.1
    pole_w_smooth: float = 0.1
    prior_fraction: float = 1.0 / 3.0
    # risk estimation
    edge_band: int = 16
    edge_sigma: float = 16.0
    stat_sigma: float = 4.0
    axis_weight_h: float = 1.0
    axis_weight_v: float = 0.25
    # erase-mask filtering
    gauss_sigma: float = 2.0
    gauss_threshold: float = 0.5
    median_radius: int = 1

    @classmethod
    def for_task(cls, task: str, **overrides) -> "RunConfig":
        """Config with the task's published defaults applied."""
        base = dict(_TASK_DEFAULTS.get(task, {}))
        base.update(overrides)
        return cls(task=task, **base)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "task" not in data:
            raise ConfigError("config requires a task")
        task = data["task"]
        rest = {k: v for k, v in data.items() if k != "task"}
        return cls.for_task(task, **rest)

    def to_dict(self) -> dict:
        return asdict(self)

    def risk_weights(self) -> RiskWeights:
        return RiskWeights(self.w_init, self.w_edge, self.w_color, self.w_smooth)

    def expand_weights(self) -> RiskWeights:
        return RiskWeights(self.expand_w_init, self.expand_w_edge, self.expand_w_color, self.expand_w_smooth)

    def pole_weights(self) -> RiskWeights:
        return RiskWeights(self.pole_w_init, self.pole_w_edge, self.pole_w_color, self.pole_w_smooth)

    def filter_params(self) -> MaskFilterParams:
        return MaskFilterParams(self.gauss_sigma, self.gauss_threshold, self.median_radius)

    def validate(self, require_prompt: bool = True) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {', '.join(TASKS)}")
        if require_prompt and not self.prompt:
            raise ConfigError("prompt required")
        if self.view_size < 8:
            raise ConfigError("view_size must be >= 8")
        if self.canvas_height < 1 or self.canvas_width < 1:
            raise ConfigError("canvas dimensions must be positive")
        if not 0.0 <= self.t0 < 1.0:
            raise ConfigError("t0 must be in [0, 1)")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        for name in ("erase_fraction", "expand_erase", "pole_erase"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        for f in fields(self):
            if f.name.startswith(("w_", "expand_w_", "pole_w_")) and getattr(self, f.name) < 0.0:
                raise ConfigError(f"{f.name} must be >= 0")
        if self.edge_band * 2 > self.view_size:
            raise ConfigError("edge_band does not fit the view")
        if self.task == TASK_PLANAR:
            if self.path_steps < 1:
                raise ConfigError("path_steps must be >= 1")
            if not 0 < self.shift_px <= self.view_size:
                raise ConfigError("shift_px must be in (0, view_size]")
            if self.canvas_height != self.view_size:
                raise ConfigError("planar canvas_height must equal view_size")
            want = self.view_size + 2 * self.path_steps * self.shift_px
            if self.canvas_width != want:
                raise ConfigError(
                    f"planar canvas_width must be view_size + 2 * path_steps * shift_px = {want}"
                )
        else:
            if not 0.0 < self.fov < 180.0:
                raise ConfigError("fov must be in (0, 180)")
            if self.stride <= 0.0:
                raise ConfigError("stride must be positive")
            if self.stride > self.fov:
                raise ConfigError(f"stride {self.stride} exceeds fov {self.fov}: views would not overlap")
        if self.task == TASK_FULL:
            if not 0.0 < self.expand_fov < 180.0 or not 0.0 < self.pole_fov < 180.0:
                raise ConfigError("expansion and pole fov must be in (0, 180)")
            if self.expand_stride <= 0.0 or self.expand_stride > self.expand_fov:
                raise ConfigError("expand_stride must be in (0, expand_fov]")
            if not 0.0 < self.prior_fraction <= 1.0:
                raise ConfigError("prior_fraction must be in (0, 1]")
            if not -90.0 < self.expand_pitch < 90.0 or self.expand_pitch == 0.0:
                raise ConfigError("expand_pitch must be nonzero and inside (-90, 90)")


_TASK_DEFAULTS = {
    TASK_PLANAR: dict(
        view_size=512,
        canvas_height=512,
        canvas_width=3072,
        shift_px=256,
        path_steps=5,
        t0=0.98,
        erase_fraction=0.30,
        w_init=1.0,
        w_edge=0.0,
        w_color=0.0,
        w_smooth=0.0,
    ),
    TASK_PANO360: dict(
        view_size=512,
        canvas_height=2048,
        canvas_width=4096,
        fov=80.0,
        stride=40.0,
        t0=0.98,
        erase_fraction=0.05,
        w_init=0.8,
        w_edge=0.2,
        w_color=0.0,
        w_smooth=0.0,
    ),
    TASK_FULL: dict(
        view_size=512,
        canvas_height=2048,
        canvas_width=4096,
        fov=80.0,
        stride=40.0,
        t0=0.98,
        erase_fraction=0.05,
        w_init=0.8,
        w_edge=0.2,
        w_color=0.0,
        w_smooth=0.0,
    ),
}


@dataclass(frozen=True)
class StepSpec:
    """One planned warp / inpaint step.

    index is signed: 0 is the stage's first view, +k the k-th forward step,
    -k the k-th backward step; the loop-closing merge gets n_side + 1.
    guidance_source is None or a tagged tuple:
      ("mirror", stage, index)  paste that already generated view
      ("merge", stage, n)       paste halves of views +n and -n
      ("prior", direction)      paste a resized crop of the first view
    """

    stage: str
    index: int
    role: str
    pose: Optional[CameraPose]
    shift: Optional[float]
    guidance_source: Optional[tuple]
    t0: float
    guidance_scale: float
    variance_scale: float
    steps: int
    erase_fraction: float
    risk_weights: RiskWeights


@dataclass
class PathPlan:
    task: str
    view_size: int
    canvas_height: int
    canvas_width: int
    steps: list = field(default_factory=list)

    def stage_steps(self, stage: str) -> list:
        return [s for s in self.steps if s.stage == stage]

    def find(self, stage: str, index: int) -> StepSpec:
        for s in self.steps:
            if s.stage == stage and s.index == index:
                return s
        raise SequencingError(f"no planned step {stage}[{index}]")


def select_symmetric_guidance(index: int) -> int:
    """Mirror view index guiding step index: +(i+1) is guided by -i and
    -(i+1) by +i; the first step on either side is guided by the start."""
    if index == 0:
        raise SequencingError("the initial step has no mirror guide")
    return -(index - 1) if index > 0 else -index - 1


def side_count(fov: float, stride: float) -> int:
    """Steps per direction before the merge view takes over.

    Walks in stride increments while the pose stays clear of the merge
    view's half-fov around 180 degrees.
    """
    return max(0, int(math.floor((180.0 - fov / 2.0 - 1e-9) / stride)))


def _mirror_source(stage: str, index: int) -> tuple:
    return ("mirror", stage, select_symmetric_guidance(index))


def _band_steps(
    stage: str,
    pitch: float,
    fov: float,
    stride: float,
    initial_role: str,
    initial_guidance: Optional[tuple],
    t0: float,
    guidance_scale: float,
    variance_scale: float,
    steps: int,
    erase_fraction: float,
    weights: RiskWeights,
) -> list:
    """Plan one closed 360 degree band: initial, interleaved +-k, merge."""
    n = side_count(fov, stride)
    if n < 1:
        raise ConfigError(f"stride {stride} leaves no room for side steps at fov {fov}")

    def spec(index: int, role: str, yaw: float, guidance: Optional[tuple]) -> StepSpec:
        return StepSpec(
            stage=stage,
            index=index,
            role=role,
            pose=CameraPose(pitch=pitch, yaw=yaw, fov=fov),
            shift=None,
            guidance_source=guidance,
            t0=t0,
            guidance_scale=guidance_scale,
            variance_scale=variance_scale,
            steps=steps,
            erase_fraction=erase_fraction,
            risk_weights=weights,
        )

    out = [spec(0, initial_role, 0.0, initial_guidance)]
    for k in range(1, n + 1):
        out.append(spec(k, ROLE_FORWARD, k * stride, _mirror_source(stage, k)))
        out.append(spec(-k, ROLE_BACKWARD, -k * stride, _mirror_source(stage, -k)))
    out.append(spec(n + 1, ROLE_MERGE, 180.0, ("merge", stage, n)))
    return out


def plan_paths(config: RunConfig) -> PathPlan:
    """Expand a config into the ordered list of steps to execute."""
    config.validate(require_prompt=False)
    plan = PathPlan(
        task=config.task,
        view_size=config.view_size,
        canvas_height=config.canvas_height,
        canvas_width=config.canvas_width,
    )

    if config.task == TASK_PLANAR:
        def spec(index: int, role: str, shift: Optional[float], guidance: Optional[tuple]) -> StepSpec:
            return StepSpec(
                stage=STAGE_PATH,
                index=index,
                role=role,
                pose=None,
                shift=shift,
                guidance_source=guidance,
                t0=config.t0,
                guidance_scale=config.guidance_scale,
                variance_scale=config.variance_scale,
                steps=config.steps,
                erase_fraction=config.erase_fraction,
                risk_weights=config.risk_weights(),
            )

        plan.steps.append(spec(0, ROLE_INITIAL, None, None))
        for k in range(1, config.path_steps + 1):
            plan.steps.append(spec(k, ROLE_FORWARD, float(config.shift_px), _mirror_source(STAGE_PATH, k)))
            plan.steps.append(spec(-k, ROLE_BACKWARD, -float(config.shift_px), _mirror_source(STAGE_PATH, -k)))
        return plan

    central = _band_steps(
        STAGE_CENTRAL,
        0.0,
        config.fov,
        config.stride,
        ROLE_INITIAL,
        None,
        config.t0,
        config.guidance_scale,
        config.variance_scale,
        config.steps,
        config.erase_fraction,
        config.risk_weights(),
    )
    plan.steps.extend(central)
    if config.task == TASK_PANO360:
        return plan

    for stage, pitch, role, direction in (
        (STAGE_EXPAND_UP, config.expand_pitch, ROLE_EXPAND_UP, UP),
        (STAGE_EXPAND_DOWN, -config.expand_pitch, ROLE_EXPAND_DOWN, DOWN),
    ):
        plan.steps.extend(
            _band_steps(
                stage,
                pitch,
                config.expand_fov,
                config.expand_stride,
                role,
                ("prior", direction),
                config.expand_t0,
                config.expand_guidance,
                config.expand_variance,
                config.steps,
                config.expand_erase,
                config.expand_weights(),
            )
        )
    for stage, pitch, direction in (
        (STAGE_POLE_TOP, 90.0, UP),
        (STAGE_POLE_BOTTOM, -90.0, DOWN),
    ):
        plan.steps.append(
            StepSpec(
                stage=stage,
                index=0,
                role=ROLE_POLE_CLOSE,
                pose=CameraPose(pitch=pitch, yaw=0.0, fov=config.pole_fov),
                shift=None,
                guidance_source=("prior", direction),
                t0=config.pole_t0,
                guidance_scale=config.pole_guidance,
                variance_scale=config.pole_variance,
                steps=config.steps,
                erase_fraction=config.pole_erase,
                risk_weights=config.pole_weights(),
            )
        )
    return plan


def validate_plan(plan: PathPlan, config: RunConfig) -> None:
    """Check structural invariants of a plan; raises on violation."""
    if plan.task == TASK_PLANAR:
        want = 2 * config.path_steps + 1
        if len(plan.steps) != want:
            raise ConfigError(f"planar plan has {len(plan.steps)} steps, expected {want}")
        for s in plan.steps:
            if s.index != 0 and abs(s.shift) != config.shift_px:
                raise ConfigError(f"step {s.index} shift {s.shift} != +-{config.shift_px}")
        _check_mirrors(plan.stage_steps(STAGE_PATH))
        return

    stages = []
    for s in plan.steps:
        if s.stage not in stages:
            stages.append(s.stage)
    if plan.task == TASK_PANO360:
        if stages != [STAGE_CENTRAL]:
            raise ConfigError(f"pano360 plan has stages {stages}")
    else:
        if stages != list(FULL_STAGES):
            raise ConfigError(f"full plan stages {stages}, expected {list(FULL_STAGES)}")

    for stage in stages:
        steps = plan.stage_steps(stage)
        if stage in (STAGE_POLE_TOP, STAGE_POLE_BOTTOM):
            if len(steps) != 1 or steps[0].index != 0:
                raise ConfigError(f"pole stage {stage} must hold exactly the index-0 step")
            continue
        fov = steps[0].pose.fov
        stride = config.stride if stage == STAGE_CENTRAL else config.expand_stride
        n = side_count(fov, stride)
        if len(steps) != 2 * n + 2:
            raise ConfigError(f"stage {stage} has {len(steps)} steps, expected {2 * n + 2}")
        merge = steps[-1]
        if merge.role != ROLE_MERGE or abs(abs(merge.pose.yaw) - 180.0) > 1e-9:
            raise ConfigError(f"stage {stage} must end with a merge view at yaw 180")
        _check_mirrors(steps)


def _check_mirrors(steps: list) -> None:
    for s in steps:
        if s.role not in (ROLE_FORWARD, ROLE_BACKWARD):
            continue
        want = ("mirror", s.stage, select_symmetric_guidance(s.index))
        if s.guidance_source != want:
            raise SequencingError(
                f"step {s.stage}[{s.index}] guided by {s.guidance_source}, expected {want}"
            )


@dataclass
class PipelineResult:
    canvas: PanoCanvas
    diagnostics: dict


def run_pipeline(
    config: RunConfig,
    inpainter: Callable,
    observer: Optional[Callable] = None,
) -> PipelineResult:
    """Execute a full run and return the finished canvas plus diagnostics.

    observer, when given, is called after every step as
    observer(record, view, mask, risk); view / mask / risk may be None for
    steps that skipped the backend.

    On error the raised exception carries step_context, partial_canvas and
    partial_diagnostics attributes.
    """
    config.validate(require_prompt=True)
    plan = plan_paths(config)
    validate_plan(plan, config)
    runner = _Runner(config, plan, inpainter, observer)
    return runner.run()


class _Runner:
    """Mutable state of one run."""

    def __init__(self, config: RunConfig, plan: PathPlan, inpainter: Callable, observer) -> None:
        self.config = config
        self.plan = plan
        self.inpainter = inpainter
        self.observer = observer
        kind = PLANAR if config.task == TASK_PLANAR else EQUIRECT
        self.canvas = PanoCanvas.blank(kind, config.canvas_height, config.canvas_width)
        self.stats = RowStats.empty(config.canvas_height)
        self.views = {}
        self.records = []
        self.ordinal = 0
        self.backend_calls = 0
        self.fill_views = 0
        self.filter_params = config.filter_params()
        self._edge_cache = None

    # ------------------------------------------------------------------
    # run loop

    def run(self) -> PipelineResult:
        t_start = time.monotonic()
        current_stage = None
        try:
            for step in self.plan.steps:
                if current_stage is not None and step.stage != current_stage:
                    self._prune_views(current_stage)
                current_stage = step.stage
                self._run_step(step)
            if current_stage is not None:
                self._prune_views(current_stage)
            if self.config.task != TASK_PLANAR:
                self._fill_gaps()
        except Exception as exc:
            exc.step_context = getattr(exc, "step_context", self._context_hint())
            exc.partial_canvas = self.canvas
            exc.partial_diagnostics = self._diagnostics(time.monotonic() - t_start)
            raise
        return PipelineResult(self.canvas, self._diagnostics(time.monotonic() - t_start))

    def _context_hint(self) -> dict:
        return {"ordinal": self.ordinal, "records": len(self.records)}

    def _diagnostics(self, wall_s: float) -> dict:
        return {
            "task": self.config.task,
            "seed": self.config.seed,
            "canvas": {
                "kind": self.canvas.kind,
                "height": self.canvas.height,
                "width": self.canvas.width,
            },
            "steps": list(self.records),
            "totals": {
                "wall_ms": wall_s * 1000.0,
                "backend_calls": self.backend_calls,
                "fill_views": self.fill_views,
                "known_fraction": self.canvas.known_fraction(),
            },
        }

    def _prune_views(self, stage: str) -> None:
        # Priors for later stages come from the first central view only.
        for key in [k for k in self.views if k[0] == stage]:
            if key == (STAGE_CENTRAL, 0):
                continue
            del self.views[key]

    # ------------------------------------------------------------------
    # per-step execution

    def _next_seed(self) -> int:
        seed = (self.config.seed * _SEED_STRIDE + self.ordinal) & (2**63 - 1)
        return seed

    def _sdedit(self, step: StepSpec, seed: int) -> SdeditParams:
        return SdeditParams(
            t0=step.t0,
            guidance_scale=step.guidance_scale,
            variance_scale=step.variance_scale,
            steps=step.steps,
            seed=seed,
        )

    def _inpaint(self, request) -> ViewImage:
        self.backend_calls += 1
        result = self.inpainter(request)
        self._verify_known(request, result)
        return result

    def _verify_known(self, request, result: ViewImage) -> None:
        if result.pixels.shape != request.image.pixels.shape:
            raise ContractViolationError(
                f"backend returned {result.width}x{result.height}, "
                f"expected {request.image.width}x{request.image.height}"
            )
        known = request.mask.values < 0.5
        if not known.any():
            return
        if getattr(self.inpainter, "preserves_known_exactly", False):
            if not np.array_equal(result.pixels[known], request.image.pixels[known]):
                raise ContractViolationError("backend changed pixels outside the mask")
        else:
            drift = float(np.abs(result.pixels[known] - request.image.pixels[known]).mean())
            if drift > 0.1:
                raise ContractViolationError(
                    f"backend changed unmasked pixels by {drift:.3f} mean abs (limit 0.1)"
                )

    def _run_step(self, step: StepSpec) -> None:
        t0 = time.monotonic()
        seed = self._next_seed()
        if step.role == ROLE_INITIAL:
            outcome = self._step_initial(step, seed)
        elif step.role in (ROLE_FORWARD, ROLE_BACKWARD):
            outcome = self._step_directional(step, seed)
        elif step.role == ROLE_MERGE:
            outcome = self._step_merge(step, seed)
        else:  # expansion initials and poles render their start from the canvas
            outcome = self._step_canvas_start(step, seed)
        view, mask, risk, fractions, seam, called = outcome
        record = self._record(step, seed, fractions, seam, called, time.monotonic() - t0)
        self.records.append(record)
        self.ordinal += 1
        if self.observer is not None:
            self.observer(record, view, mask, risk)

    def _record(self, step: StepSpec, seed, fractions, seam, called, wall_s) -> dict:
        before, after, final = fractions
        pose = step.pose
        return {
            "ordinal": self.ordinal,
            "stage": step.stage,
            "index": step.index,
            "role": step.role,
            "pose": None if pose is None else {"pitch": pose.pitch, "yaw": pose.yaw, "fov": pose.fov},
            "shift": step.shift,
            "seed": seed,
            "mask_fraction_before_erase": before,
            "mask_fraction_after_erase": after,
            "mask_fraction_final": final,
            "seam_error": None if seam is None or math.isnan(seam) else seam,
            "backend_call": called,
            "wall_ms": wall_s * 1000.0,
        }

    def _step_initial(self, step: StepSpec, seed: int):
        size = self.config.view_size
        composed = ViewImage.filled(size, size, 0.0)
        mask = Mask.ones(size, size)
        request = build_inpaint_request(
            composed, mask, self.config.prompt, self._sdedit(step, seed), self.config.negative_prompt
        )
        result = self._inpaint(request)
        seam = self._commit(result, step)
        self._update_stats(result, step)
        self.views[(step.stage, step.index)] = result
        return result, mask, None, (1.0, 1.0, 1.0), seam, True

    def _step_directional(self, step: StepSpec, seed: int):
        prev_index = step.index - 1 if step.index > 0 else step.index + 1
        prev = self.views.get((step.stage, prev_index))
        if prev is None:
            raise SequencingError(f"step {step.stage}[{step.index}] needs view {prev_index} first")
        if self.config.task == TASK_PLANAR:
            warp = planar_shift_warp(prev, step.shift)
        else:
            prev_pose = self.plan.find(step.stage, prev_index).pose
            warp = rotate_warp(prev, prev_pose, step.pose)
        geo = warp.unknown
        before = float(geo.values.mean())

        risk = self._directional_risk(step, warp.image, prev_index)
        erased = erase_by_risk(geo, risk, step.erase_fraction)
        after = float(erased.values.mean())
        final_mask = self._filter_union(erased, geo)

        guide = self._mirror_guide(step)
        composed = paste_guidance(warp.image, guide, final_mask)
        request = build_inpaint_request(
            composed, final_mask, self.config.prompt, self._sdedit(step, seed), self.config.negative_prompt
        )
        result = self._inpaint(request)
        seam = self._commit(result, step)
        self._update_stats(result, step)
        self.views[(step.stage, step.index)] = result
        fractions = (before, after, float(final_mask.values.mean()))
        return result, final_mask, risk, fractions, seam, True

    def _step_canvas_start(self, step: StepSpec, seed: int):
        rendered, known = render_view(self.canvas, step.pose, self.config.view_size)
        geo = Mask((known.values < 0.5).astype(np.float32))
        before = float(geo.values.mean())

        risk = self._canvas_risk(step, rendered)
        erased = erase_by_risk(geo, risk, step.erase_fraction)
        after = float(erased.values.mean())
        final_mask = self._filter_union(erased, geo)

        guide = self._prior_guide(step)
        composed = paste_guidance(rendered, guide, final_mask)
        request = build_inpaint_request(
            composed, final_mask, self.config.prompt, self._sdedit(step, seed), self.config.negative_prompt
        )
        result = self._inpaint(request)
        seam = self._commit(result, step)
        self._update_stats(result, step)
        self.views[(step.stage, step.index)] = result
        fractions = (before, after, float(final_mask.values.mean()))
        return result, final_mask, risk, fractions, seam, True

    def _step_merge(self, step: StepSpec, seed: int):
        rendered, known = render_view(self.canvas, step.pose, self.config.view_size)
        geo = Mask((known.values < 0.5).astype(np.float32))
        before = float(geo.values.mean())
        if not geo.values.any():
            logger.warning("merge view %s already fully known; skipping inpaint", step.stage)
            return None, None, None, (0.0, 0.0, 0.0), None, False

        final_mask = self._filter_union(geo, geo)
        guide = self._merge_guide(step)
        composed = paste_guidance(rendered, guide, final_mask)
        request = build_inpaint_request(
            composed, final_mask, self.config.prompt, self._sdedit(step, seed), self.config.negative_prompt
        )
        result = self._inpaint(request)
        seam = self._commit(result, step)
        self._update_stats(result, step)
        fractions = (before, before, float(final_mask.values.mean()))
        return result, final_mask, None, fractions, seam, True

    # ------------------------------------------------------------------
    # risk assembly

    def _directional_risk(self, step: StepSpec, warped: ViewImage, prev_index: int) -> RiskMap:
        size = self.config.view_size
        cfg = self.config
        risks = {}
        weights = step.risk_weights
        if weights.w_init > 0.0:
            risks["init"] = risk_init(
                size,
                self._pano_offset(step),
                (0.0, 0.0),
                (cfg.axis_weight_h, cfg.axis_weight_v),
            )
        if weights.w_edge > 0.0:
            static = self._edge_static()
            if cfg.task == TASK_PLANAR:
                moved = planar_shift_field(static.values, step.shift)
            else:
                prev_pose = self.plan.find(step.stage, prev_index).pose
                moved = rotate_warp_field(static.values, prev_pose, step.pose)
            risks["edge"] = RiskMap(np.clip(moved, 0.0, 1.0).astype(np.float32))
        self._stat_risks(step, warped, risks)
        return self._combined(risks, weights)

    def _canvas_risk(self, step: StepSpec, rendered: ViewImage) -> RiskMap:
        size = self.config.view_size
        cfg = self.config
        risks = {}
        weights = step.risk_weights
        if weights.w_init > 0.0:
            risks["init"] = risk_init(
                size, (0.0, 0.0), (0.0, 0.0), (cfg.axis_weight_h, cfg.axis_weight_v)
            )
        if weights.w_edge > 0.0:
            risks["edge"] = self._edge_static()
        self._stat_risks(step, rendered, risks)
        return self._combined(risks, weights)

    def _edge_static(self) -> RiskMap:
        if self._edge_cache is None:
            self._edge_cache = risk_edge(self.config.view_size, self.config.edge_band, self.config.edge_sigma)
        return self._edge_cache

    def _combined(self, risks: dict, weights: RiskWeights) -> RiskMap:
        if not risks:
            size = self.config.view_size
            return RiskMap(np.zeros((size, size), dtype=np.float32))
        return combine_risks(risks, weights)

    def _stat_risks(self, step: StepSpec, view: ViewImage, risks: dict) -> None:
        weights = step.risk_weights
        if weights.w_color <= 0.0 and weights.w_smooth <= 0.0:
            return
        rows = self._view_rows(step)
        if weights.w_color > 0.0:
            risks["color"] = risk_color(view, self.stats, rows, self.config.stat_sigma)
        if weights.w_smooth > 0.0:
            risks["smooth"] = risk_smooth(view, self.stats, rows, self.config.stat_sigma)

    def _pano_offset(self, step: StepSpec) -> tuple:
        """View-center offset from the stage origin, in view pixels."""
        if self.config.task == TASK_PLANAR:
            return (float(step.index) * self.config.shift_px, 0.0)
        pose = step.pose
        dyaw = ((pose.yaw + 180.0) % 360.0) - 180.0
        scale = self.config.view_size / pose.fov
        return (dyaw * scale, 0.0)

    # ------------------------------------------------------------------
    # guides

    def _mirror_guide(self, step: StepSpec) -> ViewImage:
        kind, stage, index = step.guidance_source
        guide = self.views.get((stage, index))
        if guide is None:
            raise SequencingError(
                f"step {step.stage}[{step.index}] needs mirror view {stage}[{index}] first"
            )
        return guide

    def _merge_guide(self, step: StepSpec) -> ViewImage:
        _, stage, n = step.guidance_source
        plus = self.views.get((stage, n))
        minus = self.views.get((stage, -n))
        if plus is None or minus is None:
            raise SequencingError(f"merge of {stage} needs views +{n} and -{n} first")
        split = self.config.view_size // 2
        stacked = np.concatenate([plus.pixels[:, :split], minus.pixels[:, split:]], axis=1)
        return ViewImage(stacked)

    def _prior_guide(self, step: StepSpec) -> ViewImage:
        _, direction = step.guidance_source
        initial = self.views.get((STAGE_CENTRAL, 0))
        if initial is None:
            raise SequencingError("expansion needs the first central view for its prior")
        return extract_prior(initial, self.config.prior_fraction, self.config.view_size, direction)

    # ------------------------------------------------------------------
    # mask plumbing, commits, statistics

    def _filter_union(self, mask: Mask, geo: Mask) -> Mask:
        filtered = filter_mask(mask, self.filter_params)
        return Mask(np.maximum(filtered.values, geo.values))

    def _commit(self, view: ViewImage, step: StepSpec) -> float:
        if self.config.task == TASK_PLANAR:
            return self._commit_planar(view, step.index)
        return commit_view_inplace(self.canvas, view, step.pose, FIRST_WRITE_WINS)

    def _commit_planar(self, view: ViewImage, index: int) -> float:
        size = view.width
        x0 = (self.canvas.width - size) // 2 + index * self.config.shift_px
        px = self.canvas.pixels[:, x0 : x0 + size]
        kn = self.canvas.known[:, x0 : x0 + size]
        if kn.any():
            seam = float(np.abs(view.pixels[kn] - px[kn]).mean())
        else:
            seam = float("nan")
        write = ~kn
        px[write] = view.pixels[write]
        kn[:] = True
        return seam

    def _view_rows(self, step: StepSpec) -> np.ndarray:
        if self.config.task == TASK_PLANAR:
            return np.arange(self.config.view_size, dtype=np.int64)
        pitches = view_row_pitches(step.pose, self.config.view_size)
        rows = np.round(self.canvas.row_of_pitch(pitches)).astype(np.int64)
        return np.clip(rows, 0, self.canvas.height - 1)

    def _update_stats(self, view: ViewImage, step: StepSpec) -> None:
        self.stats = update_row_stats(self.stats, view, self._view_rows(step))

    # ------------------------------------------------------------------
    # gap fill

    def _target_unknown(self) -> np.ndarray:
        unknown = ~self.canvas.known
        if self.config.task == TASK_FULL:
            return unknown
        limit = self.config.fov / 2.0
        pitches = self.canvas.pitch_of_row(np.arange(self.canvas.height))
        out = unknown.copy()
        out[np.abs(pitches) > limit] = False
        return out

    def _fill_gaps(self) -> None:
        """Cover leftover unknown slivers the planned frustums missed.

        Square frustums along a band leave small gaps near the band's pitch
        limits between neighbouring view centers; each pass renders and
        inpaints one extra view centered on the first unknown pixel.
        """
        cfg = self.config
        for _ in range(GAP_FILL_LIMIT):
            remaining = self._target_unknown()
            flat = int(np.argmax(remaining))
            if not remaining.flat[flat]:
                return
            r, c = divmod(flat, self.canvas.width)
            pose = CameraPose(
                pitch=float(np.clip(self.canvas.pitch_of_row(np.array([r]))[0], -90.0, 90.0)),
                yaw=float(self.canvas.yaw_of_col(np.array([c]))[0]),
                fov=cfg.fov,
            )
            t_step = time.monotonic()
            seed = self._next_seed()
            rendered, known = render_view(self.canvas, pose, cfg.view_size)
            mask = Mask((known.values < 0.5).astype(np.float32))
            step = StepSpec(
                stage=STAGE_CENTRAL,
                index=0,
                role=ROLE_FILL,
                pose=pose,
                shift=None,
                guidance_source=None,
                t0=cfg.t0,
                guidance_scale=cfg.guidance_scale,
                variance_scale=cfg.variance_scale,
                steps=cfg.steps,
                erase_fraction=0.0,
                risk_weights=cfg.risk_weights(),
            )
            request = build_inpaint_request(
                rendered, mask, cfg.prompt, self._sdedit(step, seed), cfg.negative_prompt
            )
            result = self._inpaint(request)
            seam = self._commit(result, step)
            self._update_stats(result, step)
            self.fill_views += 1
            frac = float(mask.values.mean())
            record = self._record(step, seed, (frac, frac, frac), seam, True, time.monotonic() - t_step)
            self.records.append(record)
            self.ordinal += 1
            if self.observer is not None:
                self.observer(record, result, mask, None)
        if self._target_unknown().any():
            logger.warning("gap fill hit its %d view limit with pixels still unknown", GAP_FILL_LIMIT)
