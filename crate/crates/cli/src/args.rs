use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "sem",
    version,
    about = "Matrix-free spectral element CG solver and I/O cost model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the Poisson problem on a box mesh and report the ledger.
    Solve(SolveArgs),
    /// Evaluate the analytic cost model for one configuration.
    Analyze(AnalyzeArgs),
    /// Sweep the cost model over polynomial orders.
    Model(ModelArgs),
    /// Solve, then compare the ledger against the model term by term.
    Reconcile(ReconcileArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantArg {
    Stored,
    Remat,
}

impl From<VariantArg> for sem_core::Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Stored => sem_core::Variant::Stored,
            VariantArg::Remat => sem_core::Variant::Remat,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Report destination; stdout when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    #[arg(long, default_value_t = 4)]
    pub ex: usize,
    #[arg(long, default_value_t = 4)]
    pub ey: usize,
    #[arg(long, default_value_t = 4)]
    pub ez: usize,
    /// Read the mesh from a JSON document instead of building a box.
    #[arg(long, conflicts_with_all = ["ex", "ey", "ez"])]
    pub mesh_file: Option<PathBuf>,
    /// Polynomial order N.
    #[arg(long, default_value_t = 7)]
    pub order: usize,
    #[arg(long, value_enum, default_value = "stored")]
    pub variant: VariantArg,
    /// Word size in bits: 32 or 64.
    #[arg(long, default_value_t = 64)]
    pub precision: u32,
    /// Relative residual tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Shuffle the element order with this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Shear x by this multiple of y.
    #[arg(long, conflicts_with = "affine")]
    pub shear: Option<f64>,
    /// Linear map applied to the mesh: nine comma-separated entries, row-major.
    #[arg(
        long,
        value_delimiter = ',',
        num_args = 9,
        allow_negative_numbers = true
    )]
    pub affine: Option<Vec<f64>>,
    /// Manufactured solution sin(pi x) sin(pi y) sin(pi z); reports errors.
    #[arg(long, conflicts_with = "rhs_file")]
    pub mms: bool,
    /// JSON array with the forcing value at every local point.
    #[arg(long)]
    pub rhs_file: Option<PathBuf>,
    /// Also write the mesh as JSON.
    #[arg(long)]
    pub export_mesh: Option<PathBuf>,
    /// Include wall-clock timings (makes the report nondeterministic).
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub elements: u64,
    #[arg(long)]
    pub order: u32,
    #[arg(long)]
    pub iters: u64,
    #[arg(long, default_value_t = 3)]
    pub dim: u32,
    /// Preset name or path to a machine JSON file.
    #[arg(long, default_value = "fpga-fp64-measured")]
    pub machine: String,
    #[arg(long, value_enum, default_value = "stored")]
    pub variant: VariantArg,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long)]
    pub elements: u64,
    #[arg(long, default_value_t = 1)]
    pub iters: u64,
    #[arg(long, default_value_t = 3)]
    pub dim: u32,
    #[arg(long, default_value_t = 1)]
    pub min_order: u32,
    #[arg(long, default_value_t = 16)]
    pub max_order: u32,
    #[arg(long, default_value = "fpga-fp64-measured")]
    pub machine: String,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ReconcileArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Preset name or machine JSON path; defaults to the preset matching
    /// the variant and precision.
    #[arg(long)]
    pub machine: Option<String>,
}
