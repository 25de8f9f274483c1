//! Test oracles shared by the integration and acceptance suites. Nothing
//! here calls the sum-factorized kernels except `operator_matrix`, which
//! exists to be compared against `explicit_matrix`.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sem_core::{
    box_mesh, AffineMap, BoxBounds, DofMap, Field, HexMesh, Ledger, SemSystem, Variant,
};

pub fn mesh(ext: [usize; 3], map: Option<AffineMap>) -> HexMesh {
    let m = box_mesh(ext[0], ext[1], ext[2], BoxBounds::unit()).unwrap();
    match map {
        Some(a) => m.deform_affine(&a).unwrap(),
        None => m,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field(n: usize, rng: &mut ChaCha8Rng) -> Field<f64> {
    Field((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Random values per global id, copied to every local point.
pub fn random_continuous(dofmap: &DofMap, rng: &mut ChaCha8Rng) -> Field<f64> {
    let vals: Vec<f64> = (0..dofmap.n_unique())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    from_unique(&vals, dofmap)
}

pub fn from_unique(vals: &[f64], dofmap: &DofMap) -> Field<f64> {
    Field(dofmap.global_id().iter().map(|&g| vals[g]).collect())
}

/// Value per global id, taken from the first local copy.
pub fn to_unique(u: &[f64], dofmap: &DofMap) -> Vec<f64> {
    let mut out = vec![f64::NAN; dofmap.n_unique()];
    for (v, &g) in u.iter().zip(dofmap.global_id()) {
        if out[g].is_nan() {
            out[g] = *v;
        }
    }
    out
}

/// Global ids not on the domain boundary, ascending.
pub fn interior_ids(dofmap: &DofMap) -> Vec<usize> {
    let mut on = vec![false; dofmap.n_unique()];
    for (&g, &m) in dofmap.global_id().iter().zip(dofmap.dirichlet_mask()) {
        on[g] |= m;
    }
    (0..dofmap.n_unique()).filter(|&g| !on[g]).collect()
}

/// Unique-dof stiffness matrix on interior points, assembled element by
/// element with explicit loops over `D` and the stored `G`.
pub fn explicit_matrix(sys: &SemSystem<f64>) -> DMatrix<f64> {
    let dm = sys.dofmap();
    let np = sys.order() + 1;
    let npts = np * np * np;
    let d = |i: usize, j: usize| sys.basis().diff(i, j);
    let mut full = DMatrix::<f64>::zeros(dm.n_unique(), dm.n_unique());
    let idx = |i: usize, j: usize, k: usize| i + np * (j + np * k);
    for e in 0..sys.mesh().num_elements() {
        let g = &sys.geom().g()[e * npts..(e + 1) * npts];
        let ids = &dm.global_id()[e * npts..(e + 1) * npts];
        // grad[a][p][I]: derivative along a of basis function I at point p
        let mut grad = vec![vec![vec![0.0; npts]; npts]; 3];
        for k in 0..np {
            for j in 0..np {
                for i in 0..np {
                    let p = idx(i, j, k);
                    for l in 0..np {
                        grad[0][p][idx(l, j, k)] += d(i, l);
                        grad[1][p][idx(i, l, k)] += d(j, l);
                        grad[2][p][idx(i, j, l)] += d(k, l);
                    }
                }
            }
        }
        for p in 0..npts {
            let gp = g[p];
            let gm = [
                [gp[0], gp[1], gp[2]],
                [gp[1], gp[3], gp[4]],
                [gp[2], gp[4], gp[5]],
            ];
            for a in 0..3 {
                for b in 0..3 {
                    if gm[a][b] == 0.0 {
                        continue;
                    }
                    for ii in 0..npts {
                        let ga = grad[a][p][ii];
                        if ga == 0.0 {
                            continue;
                        }
                        for jj in 0..npts {
                            let gb = grad[b][p][jj];
                            if gb != 0.0 {
                                full[(ids[ii], ids[jj])] += ga * gm[a][b] * gb;
                            }
                        }
                    }
                }
            }
        }
    }
    let interior = interior_ids(dm);
    DMatrix::from_fn(interior.len(), interior.len(), |r, c| {
        full[(interior[r], interior[c])]
    })
}

/// Same matrix from `mask(QQ^T A_L e_j)` applied to unit vectors.
pub fn operator_matrix(sys: &SemSystem<f64>, variant: Variant) -> DMatrix<f64> {
    let dm = sys.dofmap();
    let interior = interior_ids(dm);
    let mut m = DMatrix::<f64>::zeros(interior.len(), interior.len());
    let mut ledger = Ledger::new(8);
    for (c, &gid) in interior.iter().enumerate() {
        let mut unit = vec![0.0; dm.n_unique()];
        unit[gid] = 1.0;
        let w = sys
            .apply(variant, &from_unique(&unit, dm), &mut ledger)
            .unwrap();
        let wu = to_unique(&w, dm);
        for (r, &rid) in interior.iter().enumerate() {
            m[(r, c)] = wu[rid];
        }
    }
    m
}

/// Dense Cholesky solve on interior dofs, returned as a local field.
pub fn dense_solve(sys: &SemSystem<f64>, k: &DMatrix<f64>, b: &Field<f64>) -> Field<f64> {
    let dm = sys.dofmap();
    let interior = interior_ids(dm);
    let bu = to_unique(b, dm);
    let rhs = DVector::from_iterator(interior.len(), interior.iter().map(|&g| bu[g]));
    let x = k.clone().cholesky().expect("matrix is SPD").solve(&rhs);
    let mut full = vec![0.0; dm.n_unique()];
    for (v, &g) in x.iter().zip(&interior) {
        full[g] = *v;
    }
    from_unique(&full, dm)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}
