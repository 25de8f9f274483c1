//! Direct stiffness summation `QQ^T`, Dirichlet masking and the
//! multiplicity-weighted inner product.

use crate::error::{check_len, Result};
use crate::field::Field;
use crate::ledger::{Kernel, Ledger, Traffic};
use crate::mesh::DofMap;
use crate::scalar::Real;

/// Groups of local points sharing a global id, stored CSR-style. Points
/// with multiplicity 1 belong to no group and are never touched.
#[derive(Clone, Debug, PartialEq)]
pub struct GsMap {
    n_local: usize,
    offsets: Vec<usize>,
    members: Vec<usize>,
}

pub fn build_gsmap(dofmap: &DofMap) -> GsMap {
    let mut by_id: Vec<Vec<usize>> = vec![Vec::new(); dofmap.n_unique()];
    for (local, &g) in dofmap.global_id().iter().enumerate() {
        by_id[g].push(local);
    }
    let mut offsets = vec![0];
    let mut members = Vec::new();
    // Groups are ordered by their smallest member so the layout follows
    // element storage order.
    let mut groups: Vec<Vec<usize>> = by_id.into_iter().filter(|g| g.len() > 1).collect();
    groups.sort_unstable_by_key(|g| g[0]);
    for g in groups {
        members.extend_from_slice(&g);
        offsets.push(members.len());
    }
    GsMap {
        n_local: dofmap.len(),
        offsets,
        members,
    }
}

impl GsMap {
    pub fn n_local(&self) -> usize {
        self.n_local
    }

    /// `n_gs`: local points that take part in some group.
    pub fn n_gs(&self) -> usize {
        self.members.len()
    }

    pub fn num_groups(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Members of each group in ascending local index.
    pub fn groups(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.offsets.windows(2).map(|w| &self.members[w[0]..w[1]])
    }

    /// Additions performed by one application.
    pub fn flops(&self) -> u64 {
        (self.n_gs() - self.num_groups()) as u64
    }

    /// Replaces every group member by the group sum, accumulating in
    /// ascending local index so results are bitwise reproducible.
    pub fn apply_in_place<T: Real>(&self, u: &mut [T], ledger: &mut Ledger) -> Result<()> {
        self.apply_charged(u, ledger, Traffic::GatherScatter, Kernel::GatherScatter)
    }

    pub(crate) fn apply_charged<T: Real>(
        &self,
        u: &mut [T],
        ledger: &mut Ledger,
        traffic: Traffic,
        kernel: Kernel,
    ) -> Result<()> {
        check_len(self.n_local, u.len())?;
        for group in self.groups() {
            let mut sum = T::zero();
            for &i in group {
                sum += u[i];
            }
            for &i in group {
                u[i] = sum;
            }
        }
        let n_gs = self.n_gs() as u64;
        ledger.read(traffic, n_gs);
        ledger.write(traffic, n_gs);
        ledger.flops(kernel, self.flops());
        Ok(())
    }
}

pub fn gather_scatter<T: Real>(u: &Field<T>, map: &GsMap, ledger: &mut Ledger) -> Result<Field<T>> {
    let mut out = u.clone();
    map.apply_in_place(&mut out, ledger)?;
    Ok(out)
}

pub fn mask_dirichlet_in_place<T: Real>(u: &mut [T], dofmap: &DofMap) -> Result<()> {
    check_len(dofmap.len(), u.len())?;
    for (v, &m) in u.iter_mut().zip(dofmap.dirichlet_mask()) {
        if m {
            *v = T::zero();
        }
    }
    Ok(())
}

pub fn mask_dirichlet<T: Real>(u: &Field<T>, dofmap: &DofMap) -> Result<Field<T>> {
    let mut out = u.clone();
    mask_dirichlet_in_place(&mut out, dofmap)?;
    Ok(out)
}

/// `sum_i a_i b_i c_i` with `c = 1 / multiplicity`, accumulated in `f64`.
pub fn dot3<T: Real>(a: &[T], b: &[T], dofmap: &DofMap) -> Result<f64> {
    check_len(dofmap.len(), a.len())?;
    check_len(dofmap.len(), b.len())?;
    Ok(a.iter()
        .zip(b)
        .zip(dofmap.inv_mult())
        .map(|((x, y), c)| x.widen() * y.widen() * c)
        .sum())
}

pub(crate) fn weighted_dot<T: Real>(a: &[T], b: &[T], c: &[T]) -> f64 {
    let mut acc = 0.0f64;
    for ((x, y), w) in a.iter().zip(b).zip(c) {
        acc += (*x * *y * *w).widen();
    }
    acc
}
