use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use sem_core::iomodel::{
    cost_report, reconcile as reconcile_model, CostReport, MachineSpec, ProblemSpec,
};
use sem_core::solver::{sine_forcing, sine_solution, ErrorNorms, PhaseTiming};
use sem_core::{
    box_mesh, cg_solve, AffineMap, BoxBounds, CgOptions, Field, HexMesh, Ledger, Real, SemError,
    SemSystem, SolveStats, Variant,
};

use crate::args::{AnalyzeArgs, ModelArgs, ReconcileArgs, SolveArgs, VariantArg};
use crate::report::{emit, Report, SCHEMA_VERSION};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or inputs, detected before or during setup.
    Config(String),
    /// The solver stopped without meeting the tolerance.
    Diverged(String),
    Other(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Diverged(m) => f.write_str(m),
            CliError::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<SemError> for CliError {
    fn from(e: SemError) -> Self {
        match e {
            SemError::Diverged(..) | SemError::NotSpd(..) => CliError::Diverged(e.to_string()),
            SemError::Io(_) => CliError::Other(e.into()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Other(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Serialize, Clone, Debug)]
pub struct MeshConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh_file: Option<PathBuf>,
    pub extents: [usize; 3],
    pub bounds: BoxBounds,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub affine: Option<[[f64; 3]; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Serialize, Clone, Debug)]
#[serde(rename_all = "snake_case")]
pub enum RhsSource {
    Manufactured,
    File(PathBuf),
}

/// Everything that determines a solve, after defaults and validation.
#[derive(Serialize, Clone, Debug)]
pub struct SolveConfig {
    pub mesh: MeshConfig,
    pub elements: usize,
    pub order: usize,
    pub variant: VariantArg,
    pub precision: u32,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub rhs: RhsSource,
    pub timing: bool,
}

fn affine_from(a: &SolveArgs) -> Option<AffineMap> {
    if let Some(s) = a.shear {
        return Some(AffineMap::shear_xy(s));
    }
    a.affine
        .as_ref()
        .map(|v| AffineMap::linear([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]))
}

fn validate_solve(a: &SolveArgs) -> CliResult<()> {
    if a.order == 0 {
        return Err(config_err("--order must be at least 1"));
    }
    if a.precision != 32 && a.precision != 64 {
        return Err(config_err(format!(
            "--precision must be 32 or 64, got {}",
            a.precision
        )));
    }
    if !(a.tol > 0.0 && a.tol < 1.0) {
        return Err(config_err(format!(
            "--tol must lie in (0, 1), got {}",
            a.tol
        )));
    }
    if a.max_iter == 0 {
        return Err(config_err("--max-iter must be at least 1"));
    }
    if a.mesh_file.is_none() {
        for (flag, v) in [("--ex", a.ex), ("--ey", a.ey), ("--ez", a.ez)] {
            if v == 0 {
                return Err(config_err(format!("{flag} must be at least 1")));
            }
        }
    }
    if let Some(s) = a.shear {
        if !s.is_finite() {
            return Err(config_err("--shear must be finite"));
        }
    }
    if !a.mms && a.rhs_file.is_none() {
        return Err(config_err("one of --mms or --rhs-file is required"));
    }
    Ok(())
}

fn build_mesh(a: &SolveArgs) -> CliResult<(HexMesh, MeshConfig)> {
    let base = match &a.mesh_file {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| config_err(format!("--mesh-file {}: {e}", p.display())))?;
            HexMesh::from_json(&text)
                .map_err(|e| config_err(format!("--mesh-file {}: {e}", p.display())))?
        }
        None => box_mesh(a.ex, a.ey, a.ez, BoxBounds::unit())?,
    };
    let map = affine_from(a);
    let mut mesh = match &map {
        Some(m) => base
            .deform_affine(m)
            .map_err(|e| config_err(format!("--shear/--affine: {e}")))?,
        None => base,
    };
    if let Some(seed) = a.seed {
        mesh = mesh.permute_elements(seed);
    }
    let cfg = MeshConfig {
        mesh_file: a.mesh_file.clone(),
        extents: mesh.extents(),
        bounds: mesh.bounds(),
        affine: map.map(|m| m.matrix),
        seed: a.seed,
    };
    Ok((mesh, cfg))
}

#[derive(Serialize)]
pub struct SolveResult {
    pub stats: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorNorms>,
    pub ledger_totals: LedgerTotals,
}

#[derive(Serialize)]
pub struct LedgerTotals {
    pub word_bytes: usize,
    pub total_words: u64,
    pub total_bytes: u64,
    pub total_flops: u64,
    pub iteration_words: u64,
    pub iteration_flops: u64,
}

impl From<&Ledger> for LedgerTotals {
    fn from(l: &Ledger) -> Self {
        LedgerTotals {
            word_bytes: l.word_bytes(),
            total_words: l.total_words(),
            total_bytes: l.total_bytes(),
            total_flops: l.total_flops(),
            iteration_words: l.iteration_words(),
            iteration_flops: l.iteration_flops(),
        }
    }
}

fn read_rhs(path: &Path, n: usize) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("--rhs-file {}: {e}", path.display())))?;
    let vals: Vec<f64> = serde_json::from_str(&text)
        .map_err(|e| config_err(format!("--rhs-file {}: {e}", path.display())))?;
    if vals.len() != n {
        return Err(config_err(format!(
            "--rhs-file {}: expected {n} values (one per local point), got {}",
            path.display(),
            vals.len()
        )));
    }
    Ok(vals)
}

struct SolveOutcome {
    stats: SolveStats,
    error: Option<ErrorNorms>,
}

fn run_solve<T: Real>(mesh: HexMesh, cfg: &SolveConfig) -> CliResult<SolveOutcome> {
    let sys = SemSystem::<T>::new(mesh, cfg.order)?;
    let b = match &cfg.rhs {
        RhsSource::Manufactured => sys.assemble_rhs(sine_forcing)?,
        RhsSource::File(p) => {
            let f = read_rhs(p, sys.len())?;
            let mut b: Vec<T> = f
                .iter()
                .zip(sys.geom().jw())
                .map(|(f, jw)| T::of(f * jw.widen()))
                .collect();
            sys.gsmap()
                .apply_in_place(&mut b, &mut Ledger::for_precision::<T>())?;
            sem_core::gather::mask_dirichlet_in_place(&mut b, sys.dofmap())?;
            Field(b)
        }
    };
    let opts = CgOptions {
        rel_tol: cfg.rel_tol,
        max_iter: cfg.max_iter,
    };
    let (x, mut stats) = cg_solve(
        &sys,
        cfg.variant.into(),
        &b,
        &Field::zeros(sys.len()),
        &opts,
    )?;
    if !cfg.timing {
        stats.timing = PhaseTiming::default();
    }
    let error = match cfg.rhs {
        RhsSource::Manufactured => Some(sys.error_norms(&x, sine_solution)?),
        RhsSource::File(_) => None,
    };
    Ok(SolveOutcome { stats, error })
}

fn prepare_solve(a: &SolveArgs) -> CliResult<(HexMesh, SolveConfig)> {
    validate_solve(a)?;
    let (mesh, mesh_cfg) = build_mesh(a)?;
    if let Some(p) = &a.export_mesh {
        fs::write(p, mesh.to_json()?)
            .map_err(|e| CliError::Other(anyhow::anyhow!("writing {}: {e}", p.display())))?;
    }
    let cfg = SolveConfig {
        mesh: mesh_cfg,
        elements: mesh.num_elements(),
        order: a.order,
        variant: a.variant,
        precision: a.precision,
        rel_tol: a.tol,
        max_iter: a.max_iter,
        rhs: match &a.rhs_file {
            Some(p) => RhsSource::File(p.clone()),
            None => RhsSource::Manufactured,
        },
        timing: a.timing,
    };
    Ok((mesh, cfg))
}

fn execute(mesh: HexMesh, cfg: &SolveConfig) -> CliResult<SolveOutcome> {
    match cfg.precision {
        32 => run_solve::<f32>(mesh, cfg),
        _ => run_solve::<f64>(mesh, cfg),
    }
}

fn stats_value(stats: &SolveStats, timing: bool) -> CliResult<Value> {
    let mut v = serde_json::to_value(stats).map_err(anyhow::Error::from)?;
    if !timing {
        if let Value::Object(m) = &mut v {
            m.remove("timing");
        }
    }
    Ok(v)
}

fn not_converged(stats: &SolveStats) -> CliError {
    CliError::Diverged(format!(
        "no convergence after {} iterations (rho = {:e})",
        stats.iterations,
        stats.rho_history.last().copied().unwrap_or(f64::NAN)
    ))
}

pub fn solve(a: &SolveArgs) -> CliResult<()> {
    let (mesh, cfg) = prepare_solve(a)?;
    let out = execute(mesh, &cfg)?;
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "solve",
        config: &cfg,
        result: SolveResult {
            stats: stats_value(&out.stats, cfg.timing)?,
            error: out.error,
            ledger_totals: (&out.stats.ledger).into(),
        },
    };
    emit(&report, &a.out)?;
    if !out.stats.converged {
        return Err(not_converged(&out.stats));
    }
    Ok(())
}

fn resolve_machine(name: &str) -> CliResult<MachineSpec> {
    MachineSpec::resolve(name).map_err(|e| config_err(format!("--machine: {e}")))
}

#[derive(Serialize)]
struct ModelConfig {
    elements: u64,
    iters: u64,
    dim: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    order: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    orders: Option<[u32; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variant: Option<VariantArg>,
    machine: MachineSpec,
}

fn validate_problem(elements: u64, dim: u32) -> CliResult<()> {
    if elements == 0 {
        return Err(config_err("--elements must be at least 1"));
    }
    if !(1..=3).contains(&dim) {
        return Err(config_err(format!("--dim must be 1, 2 or 3, got {dim}")));
    }
    Ok(())
}

fn problem(elements: u64, order: u32, iters: u64, dim: u32) -> ProblemSpec {
    ProblemSpec {
        dim,
        ..ProblemSpec::new(elements, order, iters)
    }
}

pub fn analyze(a: &AnalyzeArgs) -> CliResult<()> {
    validate_problem(a.elements, a.dim)?;
    if a.order == 0 {
        return Err(config_err("--order must be at least 1"));
    }
    let machine = resolve_machine(&a.machine)?;
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "analyze",
        config: ModelConfig {
            elements: a.elements,
            iters: a.iters,
            dim: a.dim,
            order: Some(a.order),
            orders: None,
            variant: Some(a.variant),
            machine: machine.clone(),
        },
        result: cost_report(
            &problem(a.elements, a.order, a.iters, a.dim),
            &machine,
            a.variant.into(),
        ),
    };
    emit(&report, &a.out)?;
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    order: u32,
    stored: CostReport,
    remat: CostReport,
}

pub fn model(a: &ModelArgs) -> CliResult<()> {
    validate_problem(a.elements, a.dim)?;
    if a.min_order == 0 || a.min_order > a.max_order {
        return Err(config_err(format!(
            "--min-order/--max-order must satisfy 1 <= min <= max, got {}..{}",
            a.min_order, a.max_order
        )));
    }
    let machine = resolve_machine(&a.machine)?;
    let rows: Vec<SweepRow> = (a.min_order..=a.max_order)
        .map(|order| {
            let p = problem(a.elements, order, a.iters, a.dim);
            SweepRow {
                order,
                stored: cost_report(&p, &machine, Variant::Stored),
                remat: cost_report(&p, &machine, Variant::Remat),
            }
        })
        .collect();
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "model",
        config: ModelConfig {
            elements: a.elements,
            iters: a.iters,
            dim: a.dim,
            order: None,
            orders: Some([a.min_order, a.max_order]),
            variant: None,
            machine,
        },
        result: rows,
    };
    emit(&report, &a.out)?;
    Ok(())
}

fn default_machine(variant: VariantArg, precision: u32) -> &'static str {
    match (variant, precision) {
        (VariantArg::Remat, _) => "fpga-fp32-remat",
        (VariantArg::Stored, 32) => "fpga-fp32-stored",
        _ => "fpga-fp64-stored",
    }
}

#[derive(Serialize)]
struct ReconcileConfig<'a> {
    #[serde(flatten)]
    solve: &'a SolveConfig,
    machine: MachineSpec,
}

#[derive(Serialize)]
struct ReconcileResult {
    reconciliation: sem_core::iomodel::Reconciliation,
    ledger_totals: LedgerTotals,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorNorms>,
}

pub fn reconcile(a: &ReconcileArgs) -> CliResult<()> {
    let machine_name = a
        .machine
        .clone()
        .unwrap_or_else(|| default_machine(a.solve.variant, a.solve.precision).to_string());
    validate_solve(&a.solve)?;
    let machine = resolve_machine(&machine_name)?;
    let (mesh, cfg) = prepare_solve(&a.solve)?;
    let out = execute(mesh, &cfg)?;
    let prob = ProblemSpec::new(
        out.stats.elements as u64,
        cfg.order as u32,
        out.stats.iterations as u64,
    );
    let rec = reconcile_model(&out.stats, &prob, &machine, cfg.variant.into())?;
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "reconcile",
        config: ReconcileConfig {
            solve: &cfg,
            machine,
        },
        result: ReconcileResult {
            reconciliation: rec,
            ledger_totals: (&out.stats.ledger).into(),
            converged: out.stats.converged,
            error: out.error,
        },
    };
    emit(&report, &a.solve.out)?;
    if !out.stats.converged {
        return Err(not_converged(&out.stats));
    }
    Ok(())
}
