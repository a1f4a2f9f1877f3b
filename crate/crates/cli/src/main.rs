use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use serde_json::json;

use copa_core::fixtures::{fixture_spec, write_all, write_fixture};
use copa_core::grasp::{filter_and_select, GraspError};
use copa_core::io::{read_json, write_json};
use copa_core::oracle::{load_script, CommandOracle, Oracle};
use copa_core::part_model::{annotate, model_part, PartModelConfig};
use copa_core::pipeline::{
    render_scene, run, scene_candidates, write_outputs, Mode, RunReport, Scene, TaskSpec,
};
use copa_core::solver::{solve, SolveError, SolveRequest};

const EXIT_GRASP: u8 = 2;
const EXIT_SOLVE: u8 = 3;
const EXIT_INPUT: u8 = 4;

/// Part-level constraint planning from labeled RGB-D scenes.
#[derive(Parser)]
#[command(name = "copa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grasp selection then post-grasp planning for one instruction.
    Run {
        #[arg(long)]
        scene: PathBuf,
        /// Defaults to the manifest's task instruction.
        #[arg(long)]
        instruction: Option<String>,
        /// Script JSON path, or `cmd:<program> [args]` for a stdio oracle.
        /// Defaults to the manifest's task oracle.
        #[arg(long)]
        oracle: Option<String>,
        #[arg(long, default_value = "full")]
        mode: Mode,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write overlay images into the output directory.
        #[arg(long)]
        render: bool,
    },
    /// Solves one constraint problem given as JSON.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Models every part of a scene as a vector or surface.
    FitParts {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Selects a grasp for one part.
    Grasp {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        part: u32,
    },
    /// Draws overlays for a saved run report.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Defaults to the report's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerates the synthetic fixtures.
    GenFixtures {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
        /// One fixture name; all when omitted.
        #[arg(long)]
        only: Option<String>,
    },
}

/// An error paired with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_INPUT,
            error: error.into(),
        }
    }
}

type CliResult = Result<(), Failure>;

/// Writes one line to stdout. A reader that hung up early (`copa ... | head`)
/// is not an error worth a panic.
fn emit(line: impl Display) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn seed_from_env() -> Result<Option<u64>, Failure> {
    match std::env::var("COPA_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::input(anyhow!("COPA_SEED must be an unsigned integer, got {s:?}"))),
        Err(_) => Ok(None),
    }
}

fn load_scene(path: &Path) -> Result<Scene, Failure> {
    Scene::load(path)
        .with_context(|| format!("loading scene {}", path.display()))
        .map_err(Failure::input)
}

fn make_oracle(spec: &str, base: &Path) -> Result<Box<dyn Oracle>, Failure> {
    if let Some(cmd) = spec.strip_prefix("cmd:") {
        let mut words = cmd.split_whitespace().map(str::to_string);
        let program = words
            .next()
            .ok_or_else(|| Failure::input(anyhow!("cmd: oracle needs a program")))?;
        return Ok(Box::new(CommandOracle::new(program, words.collect())));
    }
    if spec.starts_with("http://") || spec.starts_with("https://") {
        return Err(Failure::input(anyhow!(
            "HTTP oracles are not built in; wrap the endpoint with a cmd: oracle"
        )));
    }
    let path = base.join(spec);
    let script = load_script(&path)
        .with_context(|| format!("loading oracle script {}", path.display()))
        .map_err(Failure::input)?;
    Ok(Box::new(script))
}

fn cmd_run(
    scene_path: &Path,
    instruction: Option<String>,
    oracle: Option<String>,
    mode: Mode,
    out: &Path,
    render: bool,
) -> CliResult {
    let scene = load_scene(scene_path)?;
    // manifest defaults resolve against the scene directory, flags against cwd
    let (oracle_spec, oracle_base) = match (oracle, &scene.task) {
        (Some(o), _) => (o, PathBuf::new()),
        (None, Some(t)) => (t.oracle.clone(), scene.dir.clone()),
        (None, None) => return Err(Failure::input(anyhow!("--oracle is required: the scene has no task defaults"))),
    };
    let instruction = match (instruction, &scene.task) {
        (Some(i), _) => i,
        (None, Some(t)) => t.instruction.clone(),
        (None, None) => return Err(Failure::input(anyhow!("--instruction is required: the scene has no task defaults"))),
    };
    let oracle = make_oracle(&oracle_spec, &oracle_base)?;
    let mut task = TaskSpec::new(instruction, mode);
    task.seed = seed_from_env()?;

    match run(&scene, &task, oracle.as_ref()) {
        Ok(report) => {
            write_outputs(out, &report).map_err(Failure::input)?;
            if render {
                render_scene(&scene, &report, out).map_err(Failure::input)?;
            }
            let last = report.steps.last().map(|s| s.pose);
            emit(json!({
                "steps": report.steps.len(),
                "residual": report.solve.as_ref().map(|s| s.residual),
                "final_pose": last,
                "out": out,
            }));
            Ok(())
        }
        Err(failure) => {
            // the partial report is still useful for diagnosis
            let _ = write_json(&out.join("report.json"), &failure.report);
            Err(Failure {
                code: failure.error.exit_code() as u8,
                error: failure.error.into(),
            })
        }
    }
}

fn cmd_solve(problem: &Path, out: Option<&Path>) -> CliResult {
    let request: SolveRequest = read_json(problem).map_err(Failure::input)?;
    let mut problem = request.into_problem().map_err(Failure::input)?;
    if let Some(seed) = seed_from_env()? {
        problem.seed = seed;
    }
    let (result, code) = match solve(&problem) {
        Ok(r) => (r, 0),
        Err(SolveError::NoConvergence(r)) => (*r, EXIT_SOLVE),
        Err(e) => {
            return Err(Failure {
                code: EXIT_SOLVE,
                error: e.into(),
            })
        }
    };
    match out {
        Some(path) => write_json(path, &result).map_err(Failure::input)?,
        None => emit(serde_json::to_string_pretty(&result).expect("serializable")),
    }
    if code != 0 {
        return Err(Failure {
            code,
            error: anyhow!("no start met the tolerance; best residual {}", result.residual),
        });
    }
    Ok(())
}

fn cmd_fit_parts(scene_path: &Path, out: &Path) -> CliResult {
    let scene = load_scene(scene_path)?;
    let cfg = PartModelConfig::default();
    let mut elements = Vec::new();
    let mut errors = Vec::new();
    for part in scene.all_parts() {
        let cam = scene.camera(&part.camera).expect("validated camera");
        match model_part(part, &cam.depth, &cam.model, &scene.arm_reference, &cfg) {
            Ok(e) => elements.push((part.camera.clone(), e)),
            Err(e) => errors.push(json!({"id": part.id, "message": e.to_string()})),
        }
    }
    let mut annotations = Vec::new();
    for cam in &scene.cameras {
        let on_cam: Vec<_> = elements
            .iter()
            .filter(|(c, _)| *c == cam.name)
            .map(|(_, e)| e.clone())
            .collect();
        if !on_cam.is_empty() {
            let doc = annotate(&on_cam, &cam.model).map_err(Failure::input)?;
            annotations.push(json!({"camera": cam.name, "annotations": doc.annotations}));
        }
    }
    let elements: Vec<_> = elements.into_iter().map(|(_, e)| e).collect();
    let doc = json!({"elements": elements, "annotations": annotations, "errors": errors});
    write_json(out, &doc).map_err(Failure::input)?;
    if !errors.is_empty() {
        return Err(Failure::input(anyhow!("{} part(s) could not be modeled; see {}", errors.len(), out.display())));
    }
    Ok(())
}

fn cmd_grasp(scene_path: &Path, part_id: u32) -> CliResult {
    let scene = load_scene(scene_path)?;
    let part = scene
        .part(part_id)
        .ok_or_else(|| Failure::input(anyhow!("scene has no part {part_id}")))?;
    let cam = scene.camera(&part.camera).expect("validated camera");
    let candidates = scene_candidates(&scene, part, seed_from_env()?).map_err(|e| Failure::input(anyhow!(e)))?;
    match filter_and_select(&candidates, part, &cam.model) {
        Ok(sel) => {
            emit(serde_json::to_string_pretty(&sel).expect("serializable"));
            Ok(())
        }
        Err(e @ (GraspError::NoCandidateInMask { .. } | GraspError::EmptyCandidates)) => Err(Failure {
            code: EXIT_GRASP,
            error: e.into(),
        }),
        Err(e) => Err(Failure::input(e)),
    }
}

fn cmd_render(scene_path: &Path, report_path: &Path, out: Option<PathBuf>) -> CliResult {
    let scene = load_scene(scene_path)?;
    let report: RunReport = read_json(report_path).map_err(Failure::input)?;
    let out = out.unwrap_or_else(|| report_path.parent().map(Path::to_path_buf).unwrap_or_default());
    let written = render_scene(&scene, &report, &out).map_err(Failure::input)?;
    for p in written {
        emit(p.display());
    }
    Ok(())
}

fn cmd_gen_fixtures(out: &Path, only: Option<String>) -> CliResult {
    let manifests = match only {
        Some(name) => {
            let spec = fixture_spec(&name).map_err(Failure::input)?;
            vec![write_fixture(&spec, &out.join(&name)).map_err(Failure::input)?]
        }
        None => write_all(out).map_err(Failure::input)?,
    };
    for m in manifests {
        emit(m.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scene,
            instruction,
            oracle,
            mode,
            out,
            render,
        } => cmd_run(&scene, instruction, oracle, mode, &out, render),
        Command::Solve { problem, out } => cmd_solve(&problem, out.as_deref()),
        Command::FitParts { scene, out } => cmd_fit_parts(&scene, &out),
        Command::Grasp { scene, part } => cmd_grasp(&scene, part),
        Command::Render { scene, report, out } => cmd_render(&scene, &report, out),
        Command::GenFixtures { out, only } => cmd_gen_fixtures(&out, only),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
