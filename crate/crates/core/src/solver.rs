//! Unpreconditioned conjugate gradient on the matrix-free SEM operator.
//!
//! One iteration makes three streaming passes plus the gather-scatter:
//!
//! 1. `p = r + beta p` fused with `w = A_L p`,
//! 2. gather-scatter and Dirichlet mask on `w`, then `<p, w, c>`,
//! 3. `x += alpha p`, `r -= alpha w` fused with `rho = <r, r, c>`.
//!
//! The ledger charges each stream to one traffic term; per iteration the
//! totals are `20n + 2 n_gs` words (stored) and `15n + 2 n_gs` (remat).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::basis::SpectralBasis;
use crate::error::{check_len, Result, SemError};
use crate::field::Field;
use crate::gather::{build_gsmap, mask_dirichlet_in_place, weighted_dot, GsMap};
use crate::ledger::{Kernel, Ledger, Traffic};
use crate::mesh::{build_dofmap, DofMap, HexMesh};
use crate::operator::{apply_elements, geometric_factors, GeomFactors, Variant};
use crate::scalar::Real;

/// Flops per point of the CG vector operations: 2 for the p-update, 3 for
/// each weighted reduction, 2 each for the x and r updates.
pub const VECTOR_FLOPS_PER_POINT: u64 = 12;

/// Words per point of one iteration besides the gather-scatter.
pub fn iteration_words_per_point(variant: Variant) -> u64 {
    // SemStreams (7 vector words + geometry) + weights 2 + x 3 + reload 2
    7 + variant.geometry_words_per_point() + 2 + 3 + 2
}

/// Exact words of one iteration on this implementation.
pub fn iteration_words(variant: Variant, n: u64, n_gs: u64) -> u64 {
    iteration_words_per_point(variant) * n + 2 * n_gs
}

/// Exact flops of one iteration, gather-scatter additions excluded.
pub fn iteration_flops(variant: Variant, n: u64, order: usize) -> u64 {
    variant.local_flops(n, order) + VECTOR_FLOPS_PER_POINT * n
}

/// Everything a solve needs, built once per mesh and order.
#[derive(Clone, Debug)]
pub struct SemSystem<T> {
    mesh: HexMesh,
    basis: SpectralBasis<T>,
    dofmap: DofMap,
    gsmap: GsMap,
    geom: GeomFactors<T>,
    weights: Vec<T>,
}

impl<T: Real> SemSystem<T> {
    pub fn new(mesh: HexMesh, order: usize) -> Result<Self> {
        let basis = SpectralBasis::new(order)?;
        let dofmap = build_dofmap(&mesh, order)?;
        let gsmap = build_gsmap(&dofmap);
        let geom = geometric_factors(&mesh, &basis, &dofmap)?;
        let weights = dofmap.inv_mult().iter().map(|&c| T::of(c)).collect();
        Ok(SemSystem {
            mesh,
            basis,
            dofmap,
            gsmap,
            geom,
            weights,
        })
    }

    pub fn mesh(&self) -> &HexMesh {
        &self.mesh
    }

    pub fn basis(&self) -> &SpectralBasis<T> {
        &self.basis
    }

    pub fn dofmap(&self) -> &DofMap {
        &self.dofmap
    }

    pub fn gsmap(&self) -> &GsMap {
        &self.gsmap
    }

    pub fn geom(&self) -> &GeomFactors<T> {
        &self.geom
    }

    pub fn order(&self) -> usize {
        self.basis.order()
    }

    /// Number of local points `n`.
    pub fn len(&self) -> usize {
        self.dofmap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofmap.is_empty()
    }

    /// `mask(QQ^T A_L u)`, the assembled operator acting on a local field.
    pub fn apply(&self, variant: Variant, u: &Field<T>, ledger: &mut Ledger) -> Result<Field<T>> {
        check_len(self.len(), u.len())?;
        let mut input = u.0.clone();
        let mut w = vec![T::zero(); u.len()];
        apply_elements(variant, &self.geom, &self.basis, &mut input, &mut w, None);
        let n = self.len() as u64;
        ledger.read(
            Traffic::Standalone,
            n * (1 + variant.geometry_words_per_point()),
        );
        ledger.write(Traffic::Standalone, n);
        ledger.flops(Kernel::Operator, variant.local_flops(n, self.order()));
        self.gsmap.apply_in_place(&mut w, ledger)?;
        mask_dirichlet_in_place(&mut w, &self.dofmap)?;
        Ok(Field(w))
    }

    /// `b = mask(QQ^T (jw * f))`, the weak right-hand side of `-lap u = f`.
    pub fn assemble_rhs(&self, f: impl Fn([f64; 3]) -> f64) -> Result<Field<T>> {
        let pts = self.mesh.local_points(self.order())?;
        let mut b: Vec<T> = pts
            .iter()
            .zip(self.geom.jw())
            .map(|(x, jw)| T::of(f(*x) * jw.widen()))
            .collect();
        let mut scratch = Ledger::for_precision::<T>();
        self.gsmap.apply_in_place(&mut b, &mut scratch)?;
        mask_dirichlet_in_place(&mut b, &self.dofmap)?;
        Ok(Field(b))
    }

    /// Values of `f` at every local point, masked to zero on the boundary.
    pub fn interpolate(&self, f: impl Fn([f64; 3]) -> f64) -> Result<Field<T>> {
        let pts = self.mesh.local_points(self.order())?;
        let mut u: Vec<T> = pts.iter().map(|x| T::of(f(*x))).collect();
        mask_dirichlet_in_place(&mut u, &self.dofmap)?;
        Ok(Field(u))
    }

    /// Nodal max error and quadrature L2 error of `u` against `exact`.
    pub fn error_norms(&self, u: &Field<T>, exact: impl Fn([f64; 3]) -> f64) -> Result<ErrorNorms> {
        check_len(self.len(), u.len())?;
        let pts = self.mesh.local_points(self.order())?;
        let mut linf = 0.0f64;
        let mut l2 = 0.0f64;
        for (((x, v), jw), c) in pts
            .iter()
            .zip(u.iter())
            .zip(self.geom.jw())
            .zip(self.dofmap.inv_mult())
        {
            let e = v.widen() - exact(*x);
            linf = linf.max(e.abs());
            l2 += c * jw.widen() * e * e;
        }
        Ok(ErrorNorms {
            linf,
            l2: l2.sqrt(),
        })
    }
}

/// Exact solution `sin(pi x) sin(pi y) sin(pi z)` of the manufactured problem.
pub fn sine_solution(x: [f64; 3]) -> f64 {
    use std::f64::consts::PI;
    (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * x[2]).sin()
}

/// `f = -lap u = 3 pi^2 u` for [`sine_solution`].
pub fn sine_forcing(x: [f64; 3]) -> f64 {
    3.0 * std::f64::consts::PI.powi(2) * sine_solution(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub linf: f64,
    pub l2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgOptions {
    /// Stop once `rho_i <= rel_tol^2 rho_0`.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            rel_tol: 1e-8,
            max_iter: 1000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub total_s: f64,
    pub gather_scatter_s: f64,
    pub streamed_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub variant: Variant,
    pub precision: String,
    pub elements: usize,
    pub order: usize,
    pub n: usize,
    pub n_unique: usize,
    pub n_gs: usize,
    pub iterations: usize,
    pub converged: bool,
    /// `rho_0, rho_1, ..., rho_iterations`.
    pub rho_history: Vec<f64>,
    /// Everything charged, initial residual included.
    pub ledger: Ledger,
    pub words_per_iteration: Vec<u64>,
    pub flops_per_iteration: Vec<u64>,
    /// Wall clock of the iteration loop, initial residual excluded.
    pub timing: PhaseTiming,
}

impl SolveStats {
    /// Words of one steady-state iteration under `tag`.
    pub fn iteration_words_of(&self, tag: Traffic) -> u64 {
        if self.iterations == 0 {
            0
        } else {
            self.ledger.words(tag).total() / self.iterations as u64
        }
    }

    pub fn iteration_flops_of(&self, kernel: Kernel) -> u64 {
        if self.iterations == 0 {
            0
        } else {
            self.ledger.flops_of(kernel) / self.iterations as u64
        }
    }
}

pub fn cg_solve<T: Real>(
    system: &SemSystem<T>,
    variant: Variant,
    b: &Field<T>,
    x0: &Field<T>,
    opts: &CgOptions,
) -> Result<(Field<T>, SolveStats)> {
    cg_solve_observed(system, variant, b, x0, opts, |_, _| {})
}

/// [`cg_solve`] calling `observer(i, x_i)` after every iteration.
pub fn cg_solve_observed<T: Real>(
    system: &SemSystem<T>,
    variant: Variant,
    b: &Field<T>,
    x0: &Field<T>,
    opts: &CgOptions,
    mut observer: impl FnMut(usize, &[T]),
) -> Result<(Field<T>, SolveStats)> {
    let n = system.len();
    check_len(n, b.len())?;
    check_len(n, x0.len())?;
    if !(opts.rel_tol > 0.0) {
        return Err(SemError::InvalidArgument(format!(
            "relative tolerance must be positive, got {}",
            opts.rel_tol
        )));
    }
    let (basis, geom, gsmap, dofmap, c) = (
        &system.basis,
        &system.geom,
        &system.gsmap,
        &system.dofmap,
        &system.weights[..],
    );
    let nw = n as u64;
    let geo_words = variant.geometry_words_per_point();
    let mut ledger = Ledger::for_precision::<T>();

    // r0 = b - mask(QQ^T A_L x0), charged outside the iteration totals.
    let mut x = x0.0.clone();
    let mut w = vec![T::zero(); n];
    {
        let mut xin = x.clone();
        apply_elements(variant, geom, basis, &mut xin, &mut w, None);
    }
    ledger.read(Traffic::Initial, nw * (1 + geo_words));
    ledger.write(Traffic::Initial, nw);
    ledger.flops(Kernel::Initial, variant.local_flops(nw, basis.order()));
    gsmap.apply_charged(&mut w, &mut ledger, Traffic::Initial, Kernel::Initial)?;
    mask_dirichlet_in_place(&mut w, dofmap)?;
    let mut r: Vec<T> = b.iter().zip(&w).map(|(bv, wv)| *bv - *wv).collect();
    ledger.read(Traffic::Initial, 2 * nw);
    ledger.write(Traffic::Initial, nw);
    ledger.flops(Kernel::Initial, nw);
    let mut rho = weighted_dot(&r, &r, c);
    ledger.read(Traffic::Initial, 2 * nw);
    ledger.flops(Kernel::Initial, 3 * nw);
    if !rho.is_finite() {
        return Err(SemError::Diverged(rho, 0));
    }

    let rho0 = rho;
    let target = opts.rel_tol * opts.rel_tol * rho0;
    let mut rho_history = vec![rho0];
    let mut words_per_iteration = Vec::new();
    let mut flops_per_iteration = Vec::new();
    let mut timing = PhaseTiming::default();
    let mut converged = rho0 <= target;
    let mut iterations = 0;
    let mut p = vec![T::zero(); n];
    let mut beta = 0.0f64;
    let loop_start = Instant::now();

    while !converged && iterations < opts.max_iter {
        let i = iterations + 1;
        let before = (ledger.iteration_words(), ledger.iteration_flops());

        // p = r + beta p; w = A_L p
        apply_elements(
            variant,
            geom,
            basis,
            &mut p,
            &mut w,
            Some((&r, T::of(beta))),
        );
        ledger.read(Traffic::SemStreams, (2 + geo_words) * nw);
        ledger.write(Traffic::SemStreams, 2 * nw);
        ledger.flops(Kernel::PUpdate, 2 * nw);
        ledger.flops(Kernel::Operator, variant.local_flops(nw, basis.order()));

        let gs_start = Instant::now();
        gsmap.apply_in_place(&mut w, &mut ledger)?;
        mask_dirichlet_in_place(&mut w, dofmap)?;
        timing.gather_scatter_s += gs_start.elapsed().as_secs_f64();

        let pw = weighted_dot(&p, &w, c);
        ledger.read(Traffic::ReductionReload, 2 * nw);
        ledger.read(Traffic::ReductionWeights, nw);
        ledger.flops(Kernel::Reduction, 3 * nw);
        if !pw.is_finite() {
            return Err(SemError::Diverged(pw, i));
        }
        if pw <= 0.0 {
            return Err(SemError::NotSpd(pw, i));
        }
        let alpha = rho / pw;
        let a = T::of(alpha);

        let mut rho_new = 0.0f64;
        for ((((xv, pv), rv), wv), cv) in x.iter_mut().zip(&p).zip(r.iter_mut()).zip(&w).zip(c) {
            *xv += a * *pv;
            *rv -= a * *wv;
            rho_new += (*rv * *rv * *cv).widen();
        }
        ledger.read(Traffic::SolutionUpdate, 2 * nw);
        ledger.write(Traffic::SolutionUpdate, nw);
        ledger.read(Traffic::SemStreams, 2 * nw);
        ledger.write(Traffic::SemStreams, nw);
        ledger.read(Traffic::ReductionWeights, nw);
        ledger.flops(Kernel::Axpy, 4 * nw);
        ledger.flops(Kernel::Reduction, 3 * nw);

        words_per_iteration.push(ledger.iteration_words() - before.0);
        flops_per_iteration.push(ledger.iteration_flops() - before.1);
        rho_history.push(rho_new);
        iterations = i;
        observer(i, &x);
        if !rho_new.is_finite() {
            return Err(SemError::Diverged(rho_new, i));
        }
        beta = rho_new / rho;
        rho = rho_new;
        converged = rho <= target;
    }
    timing.total_s = loop_start.elapsed().as_secs_f64();
    timing.streamed_s = timing.total_s - timing.gather_scatter_s;

    let stats = SolveStats {
        variant,
        precision: T::LABEL.into(),
        elements: system.mesh.num_elements(),
        order: basis.order(),
        n,
        n_unique: dofmap.n_unique(),
        n_gs: gsmap.n_gs(),
        iterations,
        converged,
        rho_history,
        ledger,
        words_per_iteration,
        flops_per_iteration,
        timing,
    };
    Ok((Field(x), stats))
}
