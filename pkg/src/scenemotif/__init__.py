"""Learn reusable arrangement-motif programs and generate new arrangements.

The package learns parameterized meta-programs that capture spatial motifs
(stacks, rows, grids, ...) from a handful of annotated 3D arrangements,
then generates new physically plausible arrangements from text via program
synthesis, asset retrieval, and geometry-aware placement optimization.
"""

from .assets import (
    AssetIndex,
    AssetRecord,
    NoAssetFoundError,
    RankedCandidate,
    build_index,
    pick_asset,
    rank_assets,
)
from .core import (
    Aabb,
    Arrangement,
    DirectionSignature,
    InvalidArgumentError,
    SceneObject,
    aabb_iou,
    apply_move,
    apply_rotate,
    load_arrangement,
    relative_direction,
    save_arrangement,
    world_aabb,
)
from .execution import (
    ExecLimits,
    ExecRequest,
    ExecutionError,
    FixtureExecutor,
    ObjectTrace,
    RecordingExecutor,
    WorkerClient,
    call_request,
    program_request,
)
from .llm import (
    Budget,
    ChatSession,
    LiveBackend,
    MissingFixtureError,
    PromptCatalog,
    RecordingBackend,
    ReplayBackend,
)
from .mesh import Bvh, TriMesh, box_mesh, load_obj, save_obj
from .optimize import (
    GeoConfig,
    OptimizeResult,
    PlacedMesh,
    optimize_arrangement,
    ray_mesh_intersect,
)
from .pipeline import (
    GenerateResult,
    LearnResult,
    NoMetaProgramError,
    PipelineConfig,
    PipelineError,
    classify_description,
    generate,
    learn,
)
from .programs import (
    MetaProgram,
    MotifType,
    ProgramLibrary,
    ProgramText,
    extract_naive_program,
)
from .validation import (
    ValidationReport,
    validate_meta_program,
    validate_motif_program,
)

__version__ = "0.1.0"
