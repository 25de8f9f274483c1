//! Geometric factors and the matrix-free local Laplacian `A_L u`.
//!
//! Per element the operator is `D^T G D u`, evaluated by sum factorization:
//! three 1D contractions give the reference gradient, the symmetric
//! 6-entry tensor `G = w |J| J^-1 J^-T` (quadrature weights fused in) maps
//! it to fluxes, and three transposed contractions accumulate the result.
//!
//! Two variants differ only in where `G` comes from:
//!
//! * `Stored` streams the six precomputed entries per point.
//! * `Remat` streams one scalar per point, `w / |J|`, and rebuilds `G` from
//!   the 8 element corners kept in fast memory: the corner map gives the
//!   coordinate field, differentiating it with `D` gives `J`, and
//!   `G = (w / |J|) adj(J) adj(J)^T` needs no division.
//!
//! Flops follow a fixed convention: multiply and add count 1 each, and a
//! 1D contraction of length `N+1` costs `2(N+1)` per output point.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{gll_f64, SpectralBasis};
use crate::error::{check_len, Result, SemError};
use crate::field::Field;
use crate::ledger::{Kernel, Ledger, Traffic};
use crate::mesh::{det3, trilinear_shape, trilinear_shape_grad, DofMap, HexMesh};
use crate::scalar::Real;

/// Relative variation of `J` inside one element tolerated as affine.
const AFFINE_TOL: f64 = 1e-12;

/// Pointwise flops of the stored variant besides the contractions:
/// three rows of the symmetric 3x3 product, 3 multiplies and 2 adds each.
pub const STORED_POINT_FLOPS: u64 = 15;

/// Pointwise flops of the remat variant besides the contractions:
/// coordinates from 7 relative corners (3 x 13), adjugate (9 x 3),
/// `adj adj^T` (6 x 5), scaling (6) and the flux product (15).
pub const REMAT_POINT_FLOPS: u64 = 39 + 27 + 30 + 6 + 15;

/// Contractions per point: 6 for `u` in both variants, 9 more in remat
/// for the derivatives of the coordinate field.
pub const STORED_CONTRACTIONS: u64 = 6;
pub const REMAT_CONTRACTIONS: u64 = 15;

/// Words streamed per point by one standalone application: `u`, `w` and
/// the geometry stream (6 entries stored, 1 scalar remat).
pub const STORED_WORDS_PER_POINT: u64 = 8;
pub const REMAT_WORDS_PER_POINT: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Stored,
    Remat,
}

impl Variant {
    pub fn geometry_words_per_point(self) -> u64 {
        match self {
            Variant::Stored => 6,
            Variant::Remat => 1,
        }
    }

    /// Exact flops of one local operator application on `n` points.
    pub fn local_flops(self, n: u64, order: usize) -> u64 {
        let np = order as u64 + 1;
        match self {
            Variant::Stored => n * (2 * STORED_CONTRACTIONS * np + STORED_POINT_FLOPS),
            Variant::Remat => n * (2 * REMAT_CONTRACTIONS * np + REMAT_POINT_FLOPS),
        }
    }

    /// Words of one standalone application on `n` points.
    pub fn local_words(self, n: u64) -> u64 {
        match self {
            Variant::Stored => STORED_WORDS_PER_POINT * n,
            Variant::Remat => REMAT_WORDS_PER_POINT * n,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Stored => "stored",
            Variant::Remat => "remat",
        })
    }
}

impl FromStr for Variant {
    type Err = SemError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stored" => Ok(Variant::Stored),
            "remat" => Ok(Variant::Remat),
            other => Err(SemError::InvalidArgument(format!(
                "unknown variant '{other}', expected stored or remat"
            ))),
        }
    }
}

/// Geometry of every element at the GLL points.
#[derive(Clone, Debug)]
pub struct GeomFactors<T> {
    order: usize,
    /// `(G11, G12, G13, G22, G23, G33)` per local point.
    g: Vec<[T; 6]>,
    /// `J^-1` per element, rows reference direction, columns physical.
    jinv: Vec<[[T; 3]; 3]>,
    /// `w_i w_j w_k |J|` per local point.
    jw: Vec<T>,
    /// `w_i w_j w_k / |J|` per local point, the remat stream.
    remat_weight: Vec<T>,
    /// Element corners relative to corner 0.
    corners: Vec<[[T; 3]; 8]>,
    /// Corner shape functions at the reference GLL points, element independent.
    shape: Vec<[T; 8]>,
}

pub fn geometric_factors<T: Real>(
    mesh: &HexMesh,
    basis: &SpectralBasis<T>,
    dofmap: &DofMap,
) -> Result<GeomFactors<T>> {
    let order = basis.order();
    if dofmap.order() != order || dofmap.num_elements() != mesh.num_elements() {
        return Err(SemError::InvalidArgument(
            "dofmap does not belong to this mesh and basis".into(),
        ));
    }
    let (nodes, weights, _) = gll_f64(order)?;
    let np = order + 1;
    let npts = np * np * np;
    let ne = mesh.num_elements();

    let mut ref_points = Vec::with_capacity(npts);
    for k in 0..np {
        for j in 0..np {
            for i in 0..np {
                ref_points.push((
                    [nodes[i], nodes[j], nodes[k]],
                    weights[i] * weights[j] * weights[k],
                ));
            }
        }
    }
    let grads: Vec<_> = ref_points
        .iter()
        .map(|(x, _)| trilinear_shape_grad(*x))
        .collect();
    let shape = ref_points
        .iter()
        .map(|(x, _)| trilinear_shape(*x).map(T::of))
        .collect();

    let mut g = Vec::with_capacity(ne * npts);
    let mut jw = Vec::with_capacity(ne * npts);
    let mut remat_weight = Vec::with_capacity(ne * npts);
    let mut jinv = Vec::with_capacity(ne);
    let mut corners = Vec::with_capacity(ne);

    for e in 0..ne {
        let xc = mesh.element_corners(e);
        let j0 = jacobian(&xc, &trilinear_shape_grad([0.0; 3]));
        let scale = j0.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for (p, (_, w3)) in ref_points.iter().enumerate() {
            let jac = jacobian(&xc, &grads[p]);
            let det = det3(&jac);
            if !(det > 0.0) {
                return Err(SemError::InvertedElement { element: e, det });
            }
            let deviation = (0..3)
                .flat_map(|r| (0..3).map(move |c| (r, c)))
                .fold(0.0f64, |m, (r, c)| m.max((jac[r][c] - j0[r][c]).abs()));
            if deviation > AFFINE_TOL * scale {
                return Err(SemError::NonAffineElement {
                    element: e,
                    deviation,
                });
            }
            let inv = inverse3(&jac, det);
            let s = w3 * det;
            let m = |a: usize, b: usize| s * (0..3).map(|d| inv[a][d] * inv[b][d]).sum::<f64>();
            g.push([m(0, 0), m(0, 1), m(0, 2), m(1, 1), m(1, 2), m(2, 2)].map(T::of));
            jw.push(T::of(s));
            remat_weight.push(T::of(w3 / det));
        }
        jinv.push(inverse3(&j0, det3(&j0)).map(|row| row.map(T::of)));
        corners.push(std::array::from_fn(|c| {
            std::array::from_fn(|d| T::of(xc[c][d] - xc[0][d]))
        }));
    }

    Ok(GeomFactors {
        order,
        g,
        jinv,
        jw,
        remat_weight,
        corners,
        shape,
    })
}

/// `J[d][a] = d x_d / d xi_a` of the corner map.
fn jacobian(xc: &[[f64; 3]; 8], grad: &[[f64; 3]; 8]) -> [[f64; 3]; 3] {
    let mut j = [[0.0; 3]; 3];
    for c in 0..8 {
        for d in 0..3 {
            for a in 0..3 {
                j[d][a] += xc[c][d] * grad[c][a];
            }
        }
    }
    j
}

fn inverse3(m: &[[f64; 3]; 3], det: f64) -> [[f64; 3]; 3] {
    let adj = adjugate(m);
    adj.map(|row| row.map(|v| v / det))
}

#[inline(always)]
fn adjugate<T: Copy + std::ops::Mul<Output = T> + std::ops::Sub<Output = T>>(
    j: &[[T; 3]; 3],
) -> [[T; 3]; 3] {
    [
        [
            j[1][1] * j[2][2] - j[1][2] * j[2][1],
            j[0][2] * j[2][1] - j[0][1] * j[2][2],
            j[0][1] * j[1][2] - j[0][2] * j[1][1],
        ],
        [
            j[1][2] * j[2][0] - j[1][0] * j[2][2],
            j[0][0] * j[2][2] - j[0][2] * j[2][0],
            j[0][2] * j[1][0] - j[0][0] * j[1][2],
        ],
        [
            j[1][0] * j[2][1] - j[1][1] * j[2][0],
            j[0][1] * j[2][0] - j[0][0] * j[2][1],
            j[0][0] * j[1][1] - j[0][1] * j[1][0],
        ],
    ]
}

impl<T: Real> GeomFactors<T> {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.jw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jw.is_empty()
    }

    pub fn g(&self) -> &[[T; 6]] {
        &self.g
    }

    pub fn jinv(&self) -> &[[[T; 3]; 3]] {
        &self.jinv
    }

    pub fn jw(&self) -> &[T] {
        &self.jw
    }

    pub fn remat_weight(&self) -> &[T] {
        &self.remat_weight
    }

    /// `jw * J^-1 J^-T` at a local point, from the per-element inverse.
    pub fn g_from_jinv(&self, point: usize) -> [T; 6] {
        let npts = self.shape.len();
        let inv = &self.jinv[point / npts];
        let s = self.jw[point];
        let m = |a: usize, b: usize| {
            s * (inv[a][0] * inv[b][0] + inv[a][1] * inv[b][1] + inv[a][2] * inv[b][2])
        };
        [m(0, 0), m(0, 1), m(0, 2), m(1, 1), m(1, 2), m(2, 2)]
    }

    /// `G` at every local point as the remat kernel rebuilds it.
    pub fn rematerialized_g(&self, basis: &SpectralBasis<T>) -> Vec<[T; 6]> {
        let npts = self.shape.len();
        let mut scratch = Scratch::new(npts);
        let mut out = Vec::with_capacity(self.len());
        for e in 0..self.corners.len() {
            scratch.rematerialize(self, basis, e);
            out.extend_from_slice(&scratch.geo);
        }
        out
    }
}

struct Scratch<T> {
    ur: Vec<T>,
    us: Vec<T>,
    ut: Vec<T>,
    coords: [Vec<T>; 3],
    jac: [[Vec<T>; 3]; 3],
    geo: Vec<[T; 6]>,
}

impl<T: Real> Scratch<T> {
    fn new(npts: usize) -> Self {
        let z = || vec![T::zero(); npts];
        Scratch {
            ur: z(),
            us: z(),
            ut: z(),
            coords: [z(), z(), z()],
            jac: std::array::from_fn(|_| [z(), z(), z()]),
            geo: vec![[T::zero(); 6]; npts],
        }
    }

    /// Rebuilds `G` of element `e` into `self.geo`.
    fn rematerialize(&mut self, gf: &GeomFactors<T>, basis: &SpectralBasis<T>, e: usize) {
        let npts = gf.shape.len();
        let corners = &gf.corners[e];
        for (p, phi) in gf.shape.iter().enumerate() {
            for d in 0..3 {
                let mut x = phi[1] * corners[1][d];
                for c in 2..8 {
                    x += phi[c] * corners[c][d];
                }
                self.coords[d][p] = x;
            }
        }
        for d in 0..3 {
            let [jr, js, jt] = &mut self.jac[d];
            grad_ref(basis, &self.coords[d], jr, js, jt);
        }
        let weight = &gf.remat_weight[e * npts..(e + 1) * npts];
        for p in 0..npts {
            let j: [[T; 3]; 3] =
                std::array::from_fn(|d| std::array::from_fn(|a| self.jac[d][a][p]));
            let adj = adjugate(&j);
            let m = |a: usize, b: usize| {
                adj[a][0] * adj[b][0] + adj[a][1] * adj[b][1] + adj[a][2] * adj[b][2]
            };
            let s = weight[p];
            self.geo[p] = [
                s * m(0, 0),
                s * m(0, 1),
                s * m(0, 2),
                s * m(1, 1),
                s * m(1, 2),
                s * m(2, 2),
            ];
        }
    }
}

/// Reference gradient of one element field by sum factorization.
fn grad_ref<T: Real>(basis: &SpectralBasis<T>, u: &[T], ur: &mut [T], us: &mut [T], ut: &mut [T]) {
    let np = basis.points();
    let d = basis.diff_matrix();
    for k in 0..np {
        for j in 0..np {
            for i in 0..np {
                let (mut a, mut b, mut c) = (T::zero(), T::zero(), T::zero());
                for l in 0..np {
                    a += d[i * np + l] * u[l + np * (j + np * k)];
                    b += d[j * np + l] * u[i + np * (l + np * k)];
                    c += d[k * np + l] * u[i + np * (j + np * l)];
                }
                let p = i + np * (j + np * k);
                ur[p] = a;
                us[p] = b;
                ut[p] = c;
            }
        }
    }
}

/// `w = D_r^T fr + D_s^T fs + D_t^T ft`.
fn div_ref<T: Real>(basis: &SpectralBasis<T>, fr: &[T], fs: &[T], ft: &[T], w: &mut [T]) {
    let np = basis.points();
    let d = basis.diff_matrix();
    for k in 0..np {
        for j in 0..np {
            for i in 0..np {
                let mut acc = T::zero();
                for l in 0..np {
                    acc += d[l * np + i] * fr[l + np * (j + np * k)];
                    acc += d[l * np + j] * fs[i + np * (l + np * k)];
                    acc += d[l * np + k] * ft[i + np * (j + np * l)];
                }
                w[i + np * (j + np * k)] = acc;
            }
        }
    }
}

fn apply_g<T: Real>(geo: &[[T; 6]], ur: &mut [T], us: &mut [T], ut: &mut [T]) {
    for (p, g) in geo.iter().enumerate() {
        let (a, b, c) = (ur[p], us[p], ut[p]);
        ur[p] = g[0] * a + g[1] * b + g[2] * c;
        us[p] = g[1] * a + g[3] * b + g[4] * c;
        ut[p] = g[2] * a + g[4] * b + g[5] * c;
    }
}

fn element_apply<T: Real>(
    variant: Variant,
    gf: &GeomFactors<T>,
    basis: &SpectralBasis<T>,
    e: usize,
    u: &[T],
    w: &mut [T],
    s: &mut Scratch<T>,
) {
    let npts = u.len();
    {
        let Scratch { ur, us, ut, .. } = s;
        grad_ref(basis, u, ur, us, ut);
    }
    let geo: &[[T; 6]] = match variant {
        Variant::Stored => &gf.g[e * npts..(e + 1) * npts],
        Variant::Remat => {
            s.rematerialize(gf, basis, e);
            &s.geo
        }
    };
    apply_g(geo, &mut s.ur, &mut s.us, &mut s.ut);
    div_ref(basis, &s.ur, &s.us, &s.ut, w);
}

/// Element-parallel `w = A_L u`. When `update` is `Some((r, beta))` each
/// element first sets `u = r + beta u` and then applies the operator to
/// the new values, which is the fused p-update of the CG loop.
pub(crate) fn apply_elements<T: Real>(
    variant: Variant,
    gf: &GeomFactors<T>,
    basis: &SpectralBasis<T>,
    u: &mut [T],
    w: &mut [T],
    update: Option<(&[T], T)>,
) {
    let npts = gf.shape.len();
    let body = |s: &mut Scratch<T>, (e, (ue, we)): (usize, (&mut [T], &mut [T]))| {
        if let Some((r, beta)) = update {
            let re = &r[e * npts..(e + 1) * npts];
            for (p, rv) in ue.iter_mut().zip(re) {
                *p = *rv + beta * *p;
            }
        }
        element_apply(variant, gf, basis, e, ue, we, s);
    };
    u.par_chunks_mut(npts)
        .zip(w.par_chunks_mut(npts))
        .enumerate()
        .for_each_init(|| Scratch::new(npts), body);
}

fn check_shapes<T: Real>(u: &[T], gf: &GeomFactors<T>, basis: &SpectralBasis<T>) -> Result<()> {
    if gf.order != basis.order() {
        return Err(SemError::InvalidArgument(format!(
            "geometric factors of order {} used with a basis of order {}",
            gf.order,
            basis.order()
        )));
    }
    check_len(gf.len(), u.len())
}

fn apply_local<T: Real>(
    variant: Variant,
    u: &Field<T>,
    gf: &GeomFactors<T>,
    basis: &SpectralBasis<T>,
    ledger: &mut Ledger,
) -> Result<Field<T>> {
    check_shapes(u, gf, basis)?;
    let mut input = u.0.clone();
    let mut w = vec![T::zero(); u.len()];
    apply_elements(variant, gf, basis, &mut input, &mut w, None);
    let n = u.len() as u64;
    ledger.read(
        Traffic::Standalone,
        n * (1 + variant.geometry_words_per_point()),
    );
    ledger.write(Traffic::Standalone, n);
    ledger.flops(Kernel::Operator, variant.local_flops(n, basis.order()));
    Ok(Field(w))
}

/// `A_L u` streaming the six stored geometric factors per point.
pub fn apply_local_stored<T: Real>(
    u: &Field<T>,
    gf: &GeomFactors<T>,
    basis: &SpectralBasis<T>,
    ledger: &mut Ledger,
) -> Result<Field<T>> {
    apply_local(Variant::Stored, u, gf, basis, ledger)
}

/// `A_L u` rebuilding the geometric factors on the fly.
pub fn apply_local_remat<T: Real>(
    u: &Field<T>,
    gf: &GeomFactors<T>,
    basis: &SpectralBasis<T>,
    ledger: &mut Ledger,
) -> Result<Field<T>> {
    apply_local(Variant::Remat, u, gf, basis, ledger)
}
