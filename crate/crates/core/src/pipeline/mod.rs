//! End-to-end runs: grasp selection from grounded part masks, then the
//! post-grasp pose sequence from solved constraints or the fixed rules.

pub mod render;
pub mod scene;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use render::{render_scene, RenderError};
pub use scene::{GraspSource, Scene, SceneCamera, SceneError, SceneManifest, SceneObject, SCENE_FORMAT};

use crate::constraint_lang::{resolve, ElementTable, MotionPlan, PlanParseError};
use crate::geometry::Pose;
use crate::grasp::{filter_and_select, load_candidates, synth_candidates, GraspCandidate, GraspSelection};
use crate::io::{write_json, IoError};
use crate::mask::PartMask;
use crate::oracle::{
    validate_selection, AuditedOracle, Candidate, ConstraintRequest, ElementSummary, Exchange,
    GroundingRequest, Oracle, Phase, Purpose,
};
use crate::part_model::{annotate, filter_arm_masks, model_part, AnnotationDocument, GeometricElement, PartModelConfig};
use crate::post_grasp::{
    interpolate, parse_rule_instruction, plan_post_grasp, plan_rule_based, Gripper, PoseStep,
    Provenance, RuleInstruction, RuleTask, Trajectory,
};
use crate::solver::{pose_from_transform, solve, SolveError, SolveProblem, SolveResult, DEFAULT_SEED};

pub const REPORT_FORMAT: &str = "copa-report/v1";
/// Largest spacing between trajectory waypoints, in meters.
pub const WAYPOINT_STEP: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "full")]
    Full,
    /// One grounding call per phase over every part.
    #[serde(rename = "no-c2f")]
    NoCoarseToFine,
    /// Fixed rule plans instead of solved constraints.
    #[serde(rename = "rule")]
    RuleBased,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Mode::Full),
            "no-c2f" => Ok(Mode::NoCoarseToFine),
            "rule" => Ok(Mode::RuleBased),
            other => Err(format!("unknown mode {other:?}; expected full, no-c2f or rule")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::NoCoarseToFine => "no-c2f",
            Mode::RuleBased => "rule",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub instruction: String,
    pub mode: Mode,
    /// Replaces the solver seed and any synthesized-candidate seed.
    pub seed: Option<u64>,
}

impl TaskSpec {
    pub fn new(instruction: impl Into<String>, mode: Mode) -> Self {
        Self {
            instruction: instruction.into(),
            mode,
            seed: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunPhase {
    Grasp,
    Motion,
}

impl fmt::Display for RunPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunPhase::Grasp => "grasp",
            RunPhase::Motion => "motion",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("scene: {0}")]
    Scene(#[from] SceneError),
    #[error("input: {0}")]
    Input(String),
    #[error("{phase} phase, {stage}: {message}")]
    Stage {
        phase: RunPhase,
        stage: &'static str,
        message: String,
    },
    #[error("constraint sentences rejected: {0}")]
    ConstraintParse(PlanParseError),
    #[error("solve: {0}")]
    Solve(SolveError),
    #[error("output: {0}")]
    Output(#[from] IoError),
}

impl PipelineError {
    /// 2 grasp failure, 3 constraint or solve failure, 4 input error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Scene(_) | PipelineError::Input(_) | PipelineError::Output(_) => 4,
            PipelineError::Stage {
                phase: RunPhase::Grasp,
                ..
            } => 2,
            PipelineError::Stage { .. } | PipelineError::ConstraintParse(_) | PipelineError::Solve(_) => 3,
        }
    }
}

fn stage_err(phase: RunPhase, stage: &'static str) -> impl Fn(String) -> PipelineError {
    move |message| PipelineError::Stage {
        phase,
        stage,
        message,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspReport {
    pub object_id: u32,
    pub part_id: u32,
    pub selection: GraspSelection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraAnnotations {
    pub camera: String,
    #[serde(flatten)]
    pub document: AnnotationDocument,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub instruction: String,
    pub mode: Mode,
    pub grasp: Option<GraspReport>,
    /// Elements modeled for the motion phase.
    pub elements: Vec<GeometricElement>,
    pub annotations: Vec<CameraAnnotations>,
    pub plan: Option<MotionPlan>,
    pub rule_task: Option<RuleTask>,
    pub movable: Vec<u32>,
    pub solve: Option<SolveResult>,
    pub solve_calls: usize,
    /// P0 first, then every post-grasp step.
    pub steps: Vec<PoseStep>,
    pub oracle_log: Vec<Exchange>,
    /// Wall-clock milliseconds per stage; the only nondeterministic field.
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(task: &TaskSpec) -> Self {
        Self {
            format: REPORT_FORMAT.into(),
            instruction: task.instruction.clone(),
            mode: task.mode,
            grasp: None,
            elements: Vec::new(),
            annotations: Vec::new(),
            plan: None,
            rule_task: None,
            movable: Vec::new(),
            solve: None,
            solve_calls: 0,
            steps: Vec::new(),
            oracle_log: Vec::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn grounding_calls(&self, purpose: Purpose) -> usize {
        self.oracle_log
            .iter()
            .filter(|e| e.purpose() == Some(purpose))
            .count()
    }

    pub fn trajectory(&self) -> Result<Trajectory, PipelineError> {
        let waypoints = interpolate(&self.steps, WAYPOINT_STEP).map_err(|e| PipelineError::Input(e.to_string()))?;
        Ok(Trajectory {
            steps: self.steps.clone(),
            waypoints,
        })
    }

    fn time(&mut self, stage: &str, start: Instant) {
        self.timings_ms
            .insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
    }
}

/// A run that stopped early, with everything recorded up to the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: PipelineError,
    pub report: Box<RunReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraspOutcome {
    pub p0: Pose,
    pub object_id: u32,
    pub part: PartMask,
}

/// Objects and their parts after dropping masks that are mostly robot arm.
fn visible_objects<'a>(
    scene: &'a Scene,
    camera: impl Fn(&str) -> Option<&'a SceneCamera>,
) -> Result<Vec<(&'a SceneObject, Vec<PartMask>)>, String> {
    let mut out = Vec::new();
    for o in &scene.objects {
        let mut kept = Vec::new();
        for p in &o.parts {
            let cam = camera(&p.camera).ok_or_else(|| format!("no camera {:?}", p.camera))?;
            match &cam.arm_mask {
                Some(arm) => kept.extend(filter_arm_masks(vec![p.clone()], arm).map_err(|e| e.to_string())?),
                None => kept.push(p.clone()),
            }
        }
        if !kept.is_empty() {
            out.push((o, kept));
        }
    }
    Ok(out)
}

fn image_ref(scene: &Scene, camera: &str) -> Option<String> {
    scene.camera(camera).and_then(|c| c.rgb_ref.clone())
}

fn part_candidates<'a>(parts: impl Iterator<Item = &'a PartMask>) -> Vec<Candidate> {
    parts
        .map(|p| Candidate {
            id: p.id,
            name: p.display_name(),
        })
        .collect()
}

fn ground(
    oracle: &AuditedOracle,
    phase: RunPhase,
    req: GroundingRequest,
) -> Result<Vec<u32>, PipelineError> {
    let stage = match req.phase {
        Phase::CoarseObject => "object grounding",
        _ => "part grounding",
    };
    let resp = oracle.ground(&req).map_err(|e| stage_err(phase, stage)(e.to_string()))?;
    validate_selection(&req, &resp).map_err(|e| stage_err(phase, stage)(e.to_string()))?;
    Ok(resp.selected)
}

fn single(ids: Vec<u32>, what: &str) -> Result<u32, String> {
    match ids[..] {
        [id] => Ok(id),
        _ => Err(format!("expected one {what}, oracle selected {ids:?}")),
    }
}

/// Candidates from the scene's file, or synthesized on the modeled part.
pub fn scene_candidates(scene: &Scene, part: &PartMask, seed: Option<u64>) -> Result<Vec<GraspCandidate>, String> {
    match &scene.grasp_source {
        GraspSource::File(path) => load_candidates(path).map_err(|e| e.to_string()),
        GraspSource::Synthesize(spec) => {
            let cam = scene
                .camera(&part.camera)
                .ok_or_else(|| format!("no camera {:?}", part.camera))?;
            let element = model_part(part, &cam.depth, &cam.model, &scene.arm_reference, &PartModelConfig::default())
                .map_err(|e| e.to_string())?;
            Ok(synth_candidates(&element, spec.n, seed.unwrap_or(spec.seed)))
        }
    }
}

pub fn run_grasp_phase(
    scene: &Scene,
    task: &TaskSpec,
    oracle: &AuditedOracle,
    report: &mut RunReport,
) -> Result<GraspOutcome, PipelineError> {
    let fail = stage_err(RunPhase::Grasp, "scene");
    let start = Instant::now();
    let visible = visible_objects(scene, |n| scene.camera(n)).map_err(&fail)?;
    if visible.is_empty() {
        return Err(fail("no parts remain after removing the robot arm".into()));
    }
    let first_camera = &visible[0].1[0].camera;
    let request = |phase, candidates| GroundingRequest {
        phase,
        purpose: Purpose::Grasp,
        instruction: task.instruction.clone(),
        image: image_ref(scene, first_camera),
        candidates,
    };
    let part_id = match task.mode {
        Mode::NoCoarseToFine => {
            let cands = part_candidates(visible.iter().flat_map(|(_, ps)| ps));
            let ids = ground(oracle, RunPhase::Grasp, request(Phase::FinePart, cands))?;
            single(ids, "part").map_err(stage_err(RunPhase::Grasp, "part grounding"))?
        }
        Mode::Full | Mode::RuleBased => {
            let objs = visible
                .iter()
                .map(|(o, _)| Candidate {
                    id: o.id,
                    name: o.name.clone(),
                })
                .collect();
            let ids = ground(oracle, RunPhase::Grasp, request(Phase::CoarseObject, objs))?;
            let obj = single(ids, "object").map_err(stage_err(RunPhase::Grasp, "object grounding"))?;
            let parts = &visible.iter().find(|(o, _)| o.id == obj).expect("validated id").1;
            let ids = ground(oracle, RunPhase::Grasp, request(Phase::FinePart, part_candidates(parts.iter())))?;
            single(ids, "part").map_err(stage_err(RunPhase::Grasp, "part grounding"))?
        }
    };
    report.time("grasp_grounding", start);
    let part = visible
        .iter()
        .flat_map(|(_, ps)| ps)
        .find(|p| p.id == part_id)
        .expect("validated id")
        .clone();
    let object_id = scene.object_of_part(part_id).expect("part belongs to an object").id;
    let cam = scene.camera(&part.camera).expect("validated camera");

    let start = Instant::now();
    let fail = stage_err(RunPhase::Grasp, "grasp candidates");
    let candidates = scene_candidates(scene, &part, task.seed).map_err(fail)?;
    let selection = filter_and_select(&candidates, &part, &cam.model)
        .map_err(|e| stage_err(RunPhase::Grasp, "grasp selection")(e.to_string()))?;
    report.time("grasp_selection", start);
    let p0 = selection.chosen.pose;
    report.grasp = Some(GraspReport {
        object_id,
        part_id,
        selection,
    });
    Ok(GraspOutcome { p0, object_id, part })
}

fn summarize(elements: &[GeometricElement]) -> Vec<ElementSummary> {
    elements
        .iter()
        .map(|e| ElementSummary {
            id: e.id,
            kind: e.kind(),
            name: e.name.clone(),
        })
        .collect()
}

fn model_parts(scene: &Scene, parts: &[PartMask]) -> Result<Vec<GeometricElement>, String> {
    let cfg = PartModelConfig::default();
    parts
        .iter()
        .map(|p| {
            let cam = scene
                .camera_after_grasp(&p.camera)
                .ok_or_else(|| format!("no camera {:?}", p.camera))?;
            model_part(p, &cam.depth, &cam.model, &scene.arm_reference, &cfg).map_err(|e| e.to_string())
        })
        .collect()
}

fn annotate_all(scene: &Scene, parts: &[PartMask], elements: &[GeometricElement]) -> Result<Vec<CameraAnnotations>, String> {
    let mut out = Vec::new();
    for cam in &scene.cameras {
        let on_cam: Vec<GeometricElement> = elements
            .iter()
            .zip(parts)
            .filter(|(_, p)| p.camera == cam.name)
            .map(|(e, _)| e.clone())
            .collect();
        if on_cam.is_empty() {
            continue;
        }
        let model = &scene.camera_after_grasp(&cam.name).unwrap_or(cam).model;
        out.push(CameraAnnotations {
            camera: cam.name.clone(),
            document: annotate(&on_cam, model).map_err(|e| e.to_string())?,
        });
    }
    Ok(out)
}

fn is_movable(scene: &Scene, grasped_object: u32, element: u32) -> bool {
    scene
        .object_of_part(element)
        .is_some_and(|o| o.movable.unwrap_or(o.id == grasped_object))
}

pub fn run_motion_phase(
    scene: &Scene,
    task: &TaskSpec,
    oracle: &AuditedOracle,
    grasp: &GraspOutcome,
    report: &mut RunReport,
) -> Result<Vec<PoseStep>, PipelineError> {
    let phase = RunPhase::Motion;
    let visible = visible_objects(scene, |n| scene.camera_after_grasp(n)).map_err(stage_err(phase, "scene"))?;
    if task.mode == Mode::RuleBased {
        let ins = parse_rule_instruction(&task.instruction).map_err(|e| PipelineError::Input(e.to_string()))?;
        return rule_motion(scene, &ins, &visible, grasp, report);
    }

    let start = Instant::now();
    let first_camera = visible.first().map(|(_, ps)| ps[0].camera.clone()).unwrap_or_default();
    let request = |phase, candidates| GroundingRequest {
        phase,
        purpose: Purpose::Task,
        instruction: task.instruction.clone(),
        image: image_ref(scene, &first_camera),
        candidates,
    };
    let part_ids = match task.mode {
        Mode::NoCoarseToFine => {
            let cands = part_candidates(visible.iter().flat_map(|(_, ps)| ps));
            ground(oracle, phase, request(Phase::FinePart, cands))?
        }
        _ => {
            let objs = visible
                .iter()
                .map(|(o, _)| Candidate {
                    id: o.id,
                    name: o.name.clone(),
                })
                .collect();
            let obj_ids = ground(oracle, phase, request(Phase::CoarseObject, objs))?;
            let cands = part_candidates(
                visible
                    .iter()
                    .filter(|(o, _)| obj_ids.contains(&o.id))
                    .flat_map(|(_, ps)| ps),
            );
            ground(oracle, phase, request(Phase::FinePart, cands))?
        }
    };
    let parts: Vec<PartMask> = visible
        .iter()
        .flat_map(|(_, ps)| ps)
        .filter(|p| part_ids.contains(&p.id))
        .cloned()
        .collect();
    report.time("task_grounding", start);

    let start = Instant::now();
    let elements = model_parts(scene, &parts).map_err(stage_err(phase, "part modeling"))?;
    report.annotations = annotate_all(scene, &parts, &elements).map_err(stage_err(phase, "annotation"))?;
    report.elements = elements.clone();
    report.time("part_modeling", start);

    let start = Instant::now();
    let creq = ConstraintRequest {
        instruction: task.instruction.clone(),
        image: image_ref(scene, &first_camera),
        elements: summarize(&elements),
    };
    let resp = oracle
        .generate_constraints(&creq)
        .map_err(|e| stage_err(phase, "constraint generation")(e.to_string()))?;
    let plan = MotionPlan::parse(&resp.constraints, &resp.actions).map_err(PipelineError::ConstraintParse)?;
    report.plan = Some(plan.clone());
    if plan.constraints.is_empty() {
        return Err(stage_err(phase, "constraint generation")("oracle returned no constraints".into()));
    }
    let table = ElementTable::new(elements.iter().cloned());
    let resolved = resolve(&plan, &table).map_err(|e| stage_err(phase, "resolve")(e.to_string()))?;
    report.time("constraints", start);

    let start = Instant::now();
    let movable: Vec<u32> = elements
        .iter()
        .map(|e| e.id)
        .filter(|&id| is_movable(scene, grasp.object_id, id))
        .collect();
    report.movable = movable.clone();
    let problem = SolveProblem::new(resolved.constraints, movable)
        .map_err(PipelineError::Solve)?
        .with_table(scene.table)
        .with_seed(task.seed.unwrap_or(DEFAULT_SEED));
    report.solve_calls += 1;
    let result = match solve(&problem) {
        Ok(r) => r,
        Err(SolveError::NoConvergence(r)) => {
            report.solve = Some((*r).clone());
            report.time("solve", start);
            return Err(PipelineError::Solve(SolveError::NoConvergence(r)));
        }
        Err(e) => return Err(PipelineError::Solve(e)),
    };
    report.time("solve", start);
    let p1 = pose_from_transform(&grasp.p0, &result.transform);
    report.solve = Some(result);
    Ok(plan_post_grasp(&p1, &plan.actions))
}

fn rule_motion(
    scene: &Scene,
    ins: &RuleInstruction,
    visible: &[(&SceneObject, Vec<PartMask>)],
    grasp: &GraspOutcome,
    report: &mut RunReport,
) -> Result<Vec<PoseStep>, PipelineError> {
    let start = Instant::now();
    let mut elements = Vec::new();
    let mut position_of = |name: &str| {
        let (_, parts) = visible.iter().find(|(o, _)| o.name.eq_ignore_ascii_case(name))?;
        // first part that models cleanly stands in for the object
        let e = parts.iter().find_map(|p| model_parts(scene, std::slice::from_ref(p)).ok())?;
        let e = e.into_iter().next()?;
        let point = e.associated_point();
        elements.push(e);
        Some(point)
    };
    let rule = RuleTask::bind(ins, &mut position_of).map_err(stage_err(RunPhase::Motion, "rule binding"))?;
    report.elements = elements;
    report.rule_task = Some(rule.clone());
    report.time("rule_plan", start);
    Ok(plan_rule_based(&rule, &grasp.p0))
}

/// Both phases; the returned report holds P0 followed by every later step.
pub fn run(scene: &Scene, task: &TaskSpec, oracle: &dyn Oracle) -> Result<RunReport, RunFailure> {
    let audited = AuditedOracle::new(oracle);
    let mut report = RunReport::new(task);
    let outcome = (|| {
        if task.mode == Mode::RuleBased {
            parse_rule_instruction(&task.instruction).map_err(|e| PipelineError::Input(e.to_string()))?;
        }
        let grasp = run_grasp_phase(scene, task, &audited, &mut report)?;
        report.steps = vec![PoseStep::new(grasp.p0, Gripper::Hold, Provenance::Grasp)];
        let steps = run_motion_phase(scene, task, &audited, &grasp, &mut report)?;
        report.steps.extend(steps);
        Ok(())
    })();
    report.oracle_log = audited.log();
    match outcome {
        Ok(()) => Ok(report),
        Err(error) => Err(RunFailure {
            error,
            report: Box::new(report),
        }),
    }
}

/// Writes `trajectory.json` and `report.json` into `out_dir`.
pub fn write_outputs(out_dir: &Path, report: &RunReport) -> Result<(), PipelineError> {
    if !report.steps.is_empty() {
        write_json(&out_dir.join("trajectory.json"), &report.trajectory()?)?;
    }
    write_json(&out_dir.join("report.json"), report)?;
    Ok(())
}
