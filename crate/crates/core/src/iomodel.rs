//! Analytic I/O and runtime model.
//!
//! Two-level machine: unlimited slow memory, fast memory of `S` words.
//! Everything here is counted in words; bytes only enter through the
//! precision of a concrete run. Lower bounds are clamped at zero since a
//! negative bound carries no information.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SemError};
use crate::ledger::Traffic;
use crate::operator::Variant;
use crate::solver::{iteration_flops, SolveStats};

/// Problem size in model terms. `n` is always derived, never stored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub elements: u64,
    pub order: u32,
    #[serde(default = "default_dim")]
    pub dim: u32,
    pub iters: u64,
}

fn default_dim() -> u32 {
    3
}

impl ProblemSpec {
    pub fn new(elements: u64, order: u32, iters: u64) -> Self {
        ProblemSpec {
            elements,
            order,
            dim: 3,
            iters,
        }
    }

    /// `n = E (N+1)^d`.
    pub fn n(&self) -> f64 {
        self.elements as f64 * ((self.order + 1) as f64).powi(self.dim as i32)
    }

    fn i(&self) -> f64 {
        self.iters as f64
    }

    fn np(&self) -> f64 {
        (self.order + 1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub name: String,
    /// Theoretical slow-memory bandwidth, words per cycle.
    pub beta: f64,
    /// Bandwidth reached by the streamed phases.
    pub beta_eff: f64,
    /// Bandwidth of the gather-scatter phase.
    pub beta_gs: f64,
    pub frequency_hz: f64,
    pub fast_mem_words: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_watts: Option<f64>,
}

impl MachineSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SemError::InvalidMachine(format!("{}: {m}", self.name)));
        if !(self.beta_eff > 0.0 && self.beta_eff <= self.beta) {
            return bad("need 0 < beta_eff <= beta");
        }
        if !(self.beta_gs > 0.0) {
            return bad("need beta_gs > 0");
        }
        if !(self.frequency_hz > 0.0) {
            return bad("need frequency_hz > 0");
        }
        if !(self.fast_mem_words >= 0.0) {
            return bad("need fast_mem_words >= 0");
        }
        if let Some(p) = self.power_watts {
            if !(p >= 0.0) {
                return bad("need power_watts >= 0");
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: MachineSpec = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Preset name, or a path to a JSON machine file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match model_machine_defaults(name_or_path) {
            Ok(m) => Ok(m),
            Err(SemError::UnknownPreset(_)) if Path::new(name_or_path).is_file() => {
                Self::from_file(Path::new(name_or_path))
            }
            Err(e) => Err(e),
        }
    }
}

pub const PRESET_NAMES: [&str; 6] = [
    "fpga-fp64-stored",
    "fpga-fp32-stored",
    "fpga-fp32-remat",
    "fpga-fp64-measured",
    "fpga-fp32-measured",
    "fpga-fp32-remat-measured",
];

/// Stratix 10 board with 4 DDR4 banks: 32 words/cycle in fp64, 64 in fp32.
///
/// The `*-stored` and `fpga-fp32-remat` presets carry the planned
/// utilization (62% and 55% of `beta`, rounded as tabulated: 20, 40, 35)
/// and `beta_gs = 0.47`, one word per 2.125 cycles. The `*-measured`
/// presets carry the observed bandwidths. Clock rates are the synthesized
/// CG kernel frequencies and powers the measured board draw.
pub fn model_machine_defaults(name: &str) -> Result<MachineSpec> {
    let (beta, beta_eff, beta_gs, mhz, watts) = match name {
        "fpga-fp64-stored" => (32.0, 20.0, 0.47, 204.0, 78.7),
        "fpga-fp32-stored" => (64.0, 40.0, 0.47, 292.0, 75.6),
        "fpga-fp32-remat" => (64.0, 35.0, 0.47, 156.0, 76.8),
        "fpga-fp64-measured" => (32.0, 16.0, 0.53, 204.0, 78.7),
        "fpga-fp32-measured" => (64.0, 22.4, 0.54, 292.0, 75.6),
        "fpga-fp32-remat-measured" => (64.0, 21.6, 0.474, 156.0, 76.8),
        other => return Err(SemError::UnknownPreset(other.to_string())),
    };
    Ok(MachineSpec {
        name: name.to_string(),
        beta,
        beta_eff,
        beta_gs,
        frequency_hz: mhz * 1e6,
        fast_mem_words: 0.0,
        power_watts: Some(watts),
    })
}

/// Points on element boundaries when every element is connected on all
/// sides: `n ((N+1)^d - (N-1)^d) / (N+1)^d`.
pub fn n_gs_count(prob: &ProblemSpec) -> f64 {
    let d = prob.dim as i32;
    let np = prob.np();
    let inner = (prob.order as f64 - 1.0).powi(d);
    prob.n() * (np.powi(d) - inner) / np.powi(d)
}

/// CG lower bound `i (6n - 4S)`, clamped at zero.
pub fn q_lower_cg(prob: &ProblemSpec, machine: &MachineSpec) -> f64 {
    (prob.i() * (6.0 * prob.n() - 4.0 * machine.fast_mem_words)).max(0.0)
}

/// SEM lower bound `i (6n + 6n + n - 4S)`: CG vectors, six geometric
/// factors and one write of `w` per point, clamped at zero.
pub fn q_lower_sem(prob: &ProblemSpec, machine: &MachineSpec) -> f64 {
    (prob.i() * (13.0 * prob.n() - 4.0 * machine.fast_mem_words)).max(0.0)
}

/// General bound `i (6n - 4S + min(2m, m + n))` where `m` is the least
/// I/O needed to evaluate `Ax`.
pub fn q_lower_general(prob: &ProblemSpec, machine: &MachineSpec, m: f64) -> f64 {
    let n = prob.n();
    (prob.i() * (6.0 * n - 4.0 * machine.fast_mem_words + (2.0 * m).min(m + n))).max(0.0)
}

/// Words streamed per point and iteration, gather-scatter excluded.
pub fn impl_words_per_point(variant: Variant) -> f64 {
    match variant {
        Variant::Stored => 20.0,
        Variant::Remat => 15.0,
    }
}

/// Implementation I/O with the modeled `n_gs`: `i (20n + 2 n_gs)` stored,
/// `i (15n + 2 n_gs)` remat.
pub fn q_impl(prob: &ProblemSpec, variant: Variant) -> f64 {
    q_impl_with_ngs(prob, variant, n_gs_count(prob))
}

pub fn q_impl_with_ngs(prob: &ProblemSpec, variant: Variant, n_gs: f64) -> f64 {
    prob.i() * (impl_words_per_point(variant) * prob.n() + 2.0 * n_gs)
}

/// Per-iteration flop counts: the nominal model formulas next to this
/// implementation's exact counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkCounts {
    /// `n (12(N+1) + 15)`.
    pub w_alx: f64,
    /// `n (12(N+1) + 25)`.
    pub w_cg: f64,
    /// `n (30(N+1) + 106)`.
    pub w_remat: f64,
    /// `n (30(N+1) + 96)`, the remat local kernel.
    pub w_alx_remat: f64,
    pub impl_alx_stored: f64,
    pub impl_alx_remat: f64,
    pub impl_cg_stored: f64,
    pub impl_cg_remat: f64,
}

pub fn work_counts(prob: &ProblemSpec) -> WorkCounts {
    let n = prob.n();
    let np = prob.np();
    let order = prob.order as usize;
    // Implementation counts are linear in n; evaluate per point exactly.
    let per = |f: u64| f as f64 * n;
    WorkCounts {
        w_alx: n * (12.0 * np + 15.0),
        w_cg: n * (12.0 * np + 25.0),
        w_remat: n * (30.0 * np + 106.0),
        w_alx_remat: n * (30.0 * np + 96.0),
        impl_alx_stored: per(Variant::Stored.local_flops(1, order)),
        impl_alx_remat: per(Variant::Remat.local_flops(1, order)),
        impl_cg_stored: per(iteration_flops(Variant::Stored, 1, order)),
        impl_cg_remat: per(iteration_flops(Variant::Remat, 1, order)),
    }
}

/// Operational intensity of the stored local kernel, `(12(N+1)+15)/8`.
pub fn intensity_stored(order: u32) -> f64 {
    (12.0 * (order + 1) as f64 + 15.0) / 8.0
}

/// Operational intensity of the remat local kernel, `(30(N+1)+96)/3`.
pub fn intensity_remat(order: u32) -> f64 {
    (30.0 * (order + 1) as f64 + 96.0) / 3.0
}

/// Same ratios with this implementation's exact local-kernel counts.
pub fn impl_intensity(variant: Variant, order: u32) -> f64 {
    variant.local_flops(1, order as usize) as f64 / variant.local_words(1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelTime {
    pub cycles: f64,
    pub seconds: f64,
    pub flop_per_cycle: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_joules: Option<f64>,
}

/// Two-phase runtime `(Q - 2 n_gs i) / beta_eff + 2 n_gs i / beta_gs` cycles.
pub fn t_c(prob: &ProblemSpec, machine: &MachineSpec, variant: Variant) -> ModelTime {
    let gs = 2.0 * n_gs_count(prob) * prob.i();
    let q = q_impl(prob, variant);
    let cycles = (q - gs) / machine.beta_eff + gs / machine.beta_gs;
    let seconds = cycles / machine.frequency_hz;
    let w = work_counts(prob);
    let flops = prob.i()
        * match variant {
            Variant::Stored => w.w_cg,
            Variant::Remat => w.w_remat,
        };
    ModelTime {
        cycles,
        seconds,
        flop_per_cycle: if cycles > 0.0 { flops / cycles } else { 0.0 },
        energy_joules: machine.power_watts.map(|p| p * seconds),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub problem: ProblemSpec,
    pub machine: MachineSpec,
    pub variant: Variant,
    pub n: f64,
    pub n_gs: f64,
    pub q_lower_cg: f64,
    pub q_lower_sem: f64,
    pub q_axcg: f64,
    pub q_remat: f64,
    pub w_alx: f64,
    pub w_cg: f64,
    pub w_remat: f64,
    pub intensity_stored: f64,
    pub intensity_remat: f64,
    pub impl_intensity_stored: f64,
    pub impl_intensity_remat: f64,
    pub cycles: f64,
    pub t_c: f64,
    pub flop_per_cycle: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_joules: Option<f64>,
}

/// Evaluates the whole model. Work counts are totals over `iters`.
pub fn cost_report(prob: &ProblemSpec, machine: &MachineSpec, variant: Variant) -> CostReport {
    let w = work_counts(prob);
    let t = t_c(prob, machine, variant);
    let i = prob.i();
    CostReport {
        problem: *prob,
        machine: machine.clone(),
        variant,
        n: prob.n(),
        n_gs: n_gs_count(prob),
        q_lower_cg: q_lower_cg(prob, machine),
        q_lower_sem: q_lower_sem(prob, machine),
        q_axcg: q_impl(prob, Variant::Stored),
        q_remat: q_impl(prob, Variant::Remat),
        w_alx: i * w.w_alx,
        w_cg: i * w.w_cg,
        w_remat: i * w.w_remat,
        intensity_stored: intensity_stored(prob.order),
        intensity_remat: intensity_remat(prob.order),
        impl_intensity_stored: impl_intensity(Variant::Stored, prob.order),
        impl_intensity_remat: impl_intensity(Variant::Remat, prob.order),
        cycles: t.cycles,
        t_c: t.seconds,
        flop_per_cycle: t.flop_per_cycle,
        energy_joules: t.energy_joules,
    }
}

/// How much more work rematerialization costs than the stored variant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RematRatios {
    pub order: u32,
    /// `(30(N+1)+106) / (12(N+1)+25)`.
    pub nominal_solver: f64,
    /// `(30(N+1)+96) / (12(N+1)+15)`.
    pub nominal_kernel: f64,
    pub impl_solver: f64,
    pub impl_kernel: f64,
}

pub fn remat_ratios(order: u32) -> RematRatios {
    let w = work_counts(&ProblemSpec::new(1, order, 1));
    RematRatios {
        order,
        nominal_solver: w.w_remat / w.w_cg,
        nominal_kernel: w.w_alx_remat / w.w_alx,
        impl_solver: w.impl_cg_remat / w.impl_cg_stored,
        impl_kernel: w.impl_alx_remat / w.impl_alx_stored,
    }
}

fn deviation_pct(measured: f64, model: f64) -> f64 {
    if model == 0.0 {
        if measured == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        100.0 * (measured - model) / model
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermRow {
    pub term: Traffic,
    /// Words per iteration in the ledger.
    pub measured: u64,
    /// Words per iteration in the model, with the mesh's own `n_gs`.
    pub model: f64,
    pub deviation_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlopRow {
    pub quantity: String,
    pub measured: u64,
    /// Nominal closed form the model uses.
    pub nominal: f64,
    /// This implementation's closed form.
    pub implementation: u64,
    /// Signed deviation of measured from nominal.
    pub deviation_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconciliation {
    pub variant: Variant,
    pub iterations: usize,
    pub n: usize,
    pub n_gs_mesh: usize,
    pub n_gs_model: f64,
    pub terms: Vec<TermRow>,
    pub words_measured: u64,
    /// `q_impl` per iteration with the mesh `n_gs`.
    pub words_model_mesh: f64,
    /// `q_impl` per iteration with the fully connected `n_gs`.
    pub words_model_connected: f64,
    pub words_deviation_pct: f64,
    pub flops: Vec<FlopRow>,
    pub ratios: RematRatios,
    pub modeled: ModelTime,
    /// Host words per cycle in the streamed phases, back-solved from wall time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed_beta_eff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed_beta_gs: Option<f64>,
}

/// Audits a finished solve against the model. `prob.iters` is ignored in
/// favor of the iterations actually run.
pub fn reconcile(
    stats: &SolveStats,
    prob: &ProblemSpec,
    machine: &MachineSpec,
    variant: Variant,
) -> Result<Reconciliation> {
    if prob.dim != 3 {
        return Err(SemError::Mismatch(format!(
            "solver is 3D, problem has d = {}",
            prob.dim
        )));
    }
    if stats.elements as u64 != prob.elements || stats.order as u32 != prob.order {
        return Err(SemError::Mismatch(format!(
            "stats are for E = {}, N = {}; problem is E = {}, N = {}",
            stats.elements, stats.order, prob.elements, prob.order
        )));
    }
    if stats.variant != variant {
        return Err(SemError::Mismatch(format!(
            "stats come from a {} solve, reconciling as {}",
            stats.variant, variant
        )));
    }
    let n = stats.n as f64;
    let n_gs = stats.n_gs as f64;
    let sem_term = match variant {
        Variant::Stored => 13.0,
        Variant::Remat => 8.0,
    };
    let model_terms = [
        (Traffic::SemStreams, sem_term * n),
        (Traffic::ReductionWeights, 2.0 * n),
        (Traffic::SolutionUpdate, 3.0 * n),
        (Traffic::ReductionReload, 2.0 * n),
        (Traffic::GatherScatter, 2.0 * n_gs),
    ];
    let terms: Vec<TermRow> = model_terms
        .iter()
        .map(|&(term, model)| {
            let measured = stats.iteration_words_of(term);
            TermRow {
                term,
                measured,
                model,
                deviation_pct: deviation_pct(measured as f64, model),
            }
        })
        .collect();
    let words_measured: u64 = terms.iter().map(|t| t.measured).sum();
    let per_iter = ProblemSpec { iters: 1, ..*prob };
    let words_model_mesh = q_impl_with_ngs(&per_iter, variant, n_gs);

    let w = work_counts(&per_iter);
    let measured_op = stats.iteration_flops_of(crate::ledger::Kernel::Operator);
    let measured_cg = if stats.iterations == 0 {
        0
    } else {
        stats.ledger.iteration_flops() / stats.iterations as u64
    };
    let nn = stats.n as u64;
    let (pub_op, pub_cg) = match variant {
        Variant::Stored => (w.w_alx, w.w_cg),
        Variant::Remat => (w.w_alx_remat, w.w_remat),
    };
    let flops = vec![
        FlopRow {
            quantity: "local_operator".into(),
            measured: measured_op,
            nominal: pub_op,
            implementation: variant.local_flops(nn, stats.order),
            deviation_pct: deviation_pct(measured_op as f64, pub_op),
        },
        FlopRow {
            quantity: "cg_iteration".into(),
            measured: measured_cg,
            nominal: pub_cg,
            implementation: iteration_flops(variant, nn, stats.order),
            deviation_pct: deviation_pct(measured_cg as f64, pub_cg),
        },
    ];

    let run = ProblemSpec {
        iters: stats.iterations as u64,
        ..*prob
    };
    let t = &stats.timing;
    let gs_words = (stats.ledger.words(Traffic::GatherScatter).total()) as f64;
    let streamed_words = stats.ledger.iteration_words() as f64 - gs_words;
    let observed = |words: f64, secs: f64| {
        (secs > 0.0 && words > 0.0).then(|| words / (secs * machine.frequency_hz))
    };

    Ok(Reconciliation {
        variant,
        iterations: stats.iterations,
        n: stats.n,
        n_gs_mesh: stats.n_gs,
        n_gs_model: n_gs_count(prob),
        words_deviation_pct: deviation_pct(words_measured as f64, words_model_mesh),
        terms,
        words_measured,
        words_model_mesh,
        words_model_connected: q_impl(&per_iter, variant),
        flops,
        ratios: remat_ratios(prob.order),
        modeled: t_c(&run, machine, variant),
        observed_beta_eff: observed(streamed_words, t.streamed_s),
        observed_beta_gs: observed(gs_words, t.gather_scatter_s),
    })
}
