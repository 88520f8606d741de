//! `dem` command line: `mesh`, `solve`, `expr-check`, `serve`.
//!
//! Exit codes: 0 success, 1 bad input (config, paths, expressions),
//! 2 solver failure, 3 mesher or LLM failure.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use dem_core::dem::TrainControl;
use dem_core::expr::{self, Bindings};
use dem_core::mesh::{mesh_from_geo, write_msh22, GeoRequest, GmshMesher, MesherError};
use dem_core::results::{run_solvers, write_artifacts, RunConfig, RunError, SolverChoice};

use crate::api::{self, AppState};
use crate::jobs::JobManager;
use crate::llm::{BackendConfig, ChatBackend, OpenAiBackend, Unconfigured};

#[derive(Debug, Parser)]
#[command(name = "dem", version, about = "Deep energy method and FEM solver for variational PDEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverArg {
    Dem,
    Fem,
    Both,
}

impl From<SolverArg> for SolverChoice {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Dem => SolverChoice::Dem,
            SolverArg::Fem => SolverChoice::Fem,
            SolverArg::Both => SolverChoice::Both,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mesh a .geo script with gmsh and write an ASCII 2.2 .msh file.
    Mesh {
        geo: PathBuf,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 0.1)]
        lc: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the solvers of a TOML config and write the run artifacts.
    Solve {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Overrides `training.solver`.
        #[arg(long, value_enum)]
        solver: Option<SolverArg>,
        /// Overrides `training.max_epochs`.
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Overrides `network.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse an energy density over ux..wz, print its value at the
    /// undeformed state and check its gradient by finite differences.
    ExprCheck {
        energy: String,
        /// Dimension the expression must be valid in.
        #[arg(long, default_value_t = 3)]
        dim: usize,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Where job directories live.
        #[arg(long, default_value = "jobs")]
        jobs_dir: PathBuf,
        /// Relative mesh paths in submitted configs resolve against this.
        #[arg(long, default_value = ".")]
        base_dir: PathBuf,
    },
}

/// Runs a parsed command, writing reports to `out` and errors to `err`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match cli.command {
        Command::Mesh { geo, dim, lc, output } => mesh(&geo, dim, lc, &output, out, err),
        Command::Solve {
            config,
            output,
            solver,
            max_epochs,
            seed,
        } => match solve(&config, &output, solver, max_epochs, seed, out) {
            Ok(()) => 0,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                e.exit_code()
            }
        },
        Command::ExprCheck { energy, dim } => expr_check(&energy, dim, out, err),
        Command::Serve {
            port,
            host,
            jobs_dir,
            base_dir,
        } => serve(&host, port, jobs_dir, base_dir, err),
    }
}

fn mesh(geo: &PathBuf, dim: usize, lc: f64, output: &PathBuf, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let text = match std::fs::read_to_string(geo) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", geo.display());
            return 1;
        }
    };
    let req = GeoRequest {
        geo_text: text,
        characteristic_length: lc,
        dim,
    };
    match mesh_from_geo(&req, &GmshMesher::from_env()) {
        Ok(mesh) => {
            if let Err(e) = std::fs::write(output, write_msh22(&mesh)) {
                let _ = writeln!(err, "error: {}: {e}", output.display());
                return 1;
            }
            let _ = writeln!(
                out,
                "wrote {} ({} nodes, {} elements, groups: {})",
                output.display(),
                mesh.node_count(),
                mesh.elements.len(),
                mesh.groups.keys().cloned().collect::<Vec<_>>().join(", ")
            );
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                MesherError::InvalidRequest(_) => 1,
                _ => 3,
            }
        }
    }
}

fn solve(
    path: &PathBuf,
    output: &PathBuf,
    solver: Option<SolverArg>,
    max_epochs: Option<usize>,
    seed: Option<u64>,
    out: &mut dyn Write,
) -> Result<(), RunError> {
    let mut config = RunConfig::load(path)?;
    if let Some(s) = solver {
        config.training.solver = s.into();
    }
    if let Some(n) = max_epochs {
        config.training.max_epochs = n;
    }
    if let Some(s) = seed {
        config.network.seed = s;
    }
    let base = path.parent().map(PathBuf::from).unwrap_or_default();
    let problem = config.build_problem(&base, &GmshMesher::from_env())?;
    let outcome = run_solvers(&problem, config.training.solver, &TrainControl::default())?;
    write_artifacts(output, &problem.mesh, &outcome)?;
    for r in outcome.results() {
        let name = match r.solver {
            dem_core::problem::SolverKind::Dem => "DEM",
            dem_core::problem::SolverKind::Fem => "FEM",
        };
        let _ = writeln!(
            out,
            "{name} final loss: {:.10e} ({} epochs, {:?}, {:.2} s)",
            r.final_loss,
            r.history.len(),
            r.stop_reason,
            r.wall_time.as_secs_f64()
        );
    }
    if let Some(d) = outcome.difference() {
        let _ = writeln!(out, "DEM/FEM relative L2 difference of nodal magnitudes: {d:.6}");
    }
    let _ = writeln!(out, "artifacts in {}", output.display());
    Ok(())
}

/// Deformed state used for the gradient check: small, asymmetric, J > 0.
fn probe_gradient() -> [[f64; 3]; 3] {
    let mut h = [[0.0; 3]; 3];
    for (i, row) in h.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = 0.05 * ((3 * i + j + 1) as f64).sin();
        }
    }
    h
}

fn expr_check(energy: &str, dim: usize, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let e = match expr::parse(energy).and_then(|e| e.validate(dim).map(|_| e)) {
        Ok(e) => e,
        Err(x) => {
            let _ = writeln!(err, "error: {x}");
            return 1;
        }
    };
    let _ = writeln!(out, "expression: {e}");
    let identity = match e.eval(&Bindings::from_gradient(&[[0.0; 3]; 3])) {
        Ok(v) => v,
        Err(x) => {
            let _ = writeln!(err, "error at the undeformed state: {x}");
            return 2;
        }
    };
    let _ = writeln!(out, "value at identity: {identity:?}");

    let h = probe_gradient();
    let (_, grad) = match e.partials(&Bindings::from_gradient(&h)) {
        Ok(p) => p,
        Err(x) => {
            let _ = writeln!(err, "error at the probe state: {x}");
            return 2;
        }
    };
    let step = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..9 {
        let (i, j) = (k / 3, k % 3);
        let mut plus = h;
        let mut minus = h;
        plus[i][j] += step;
        minus[i][j] -= step;
        let fd = match (e.eval(&Bindings::from_gradient(&plus)), e.eval(&Bindings::from_gradient(&minus))) {
            (Ok(a), Ok(b)) => (a - b) / (2.0 * step),
            (Err(x), _) | (_, Err(x)) => {
                let _ = writeln!(err, "error near the probe state: {x}");
                return 2;
            }
        };
        worst = worst.max((fd - grad[k]).abs() / grad[k].abs().max(1.0));
    }
    let pass = worst < 1e-6;
    let _ = writeln!(
        out,
        "gradient check: {} (max relative error {worst:.2e})",
        if pass { "PASS" } else { "FAIL" }
    );
    if pass {
        0
    } else {
        2
    }
}

fn serve(host: &str, port: u16, jobs_dir: PathBuf, base_dir: PathBuf, err: &mut dyn Write) -> i32 {
    let mesher = GmshMesher::from_env();
    let jobs = match JobManager::open(jobs_dir, base_dir, mesher.clone()) {
        Ok(j) => j,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 1;
        }
    };
    let backend: Arc<dyn ChatBackend> = match BackendConfig::from_env() {
        Some(cfg) => Arc::new(OpenAiBackend::new(cfg)),
        None => {
            log::warn!("no LLM backend configured; geometry chat will fail until one is");
            Arc::new(Unconfigured)
        }
    };
    let state = Arc::new(AppState::new(jobs, backend, mesher));
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 1;
        }
    };
    let addr = format!("{host}:{port}");
    let result = runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr).await?;
        log::info!("listening on http://{addr}");
        api::serve(state, listener).await
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {addr}: {e}");
            1
        }
    }
}
