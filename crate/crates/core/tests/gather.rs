mod common;

use common::*;
use proptest::prelude::*;
use sem_core::{
    build_dofmap, build_gsmap, dot3, gather_scatter, mask_dirichlet, Field, Ledger, Traffic,
};

fn setup(ext: [usize; 3], order: usize, seed: u64) -> sem_core::DofMap {
    build_dofmap(&mesh(ext, None).permute_elements(seed), order).unwrap()
}

#[test]
fn single_element_has_no_sharing() {
    let dm = setup([1, 1, 1], 4, 0);
    let gs = build_gsmap(&dm);
    assert_eq!(gs.n_gs(), 0);
    assert_eq!(gs.flops(), 0);
    let u = Field((0..dm.len()).map(|i| i as f64).collect::<Vec<_>>());
    assert_eq!(gather_scatter(&u, &gs, &mut Ledger::new(8)).unwrap(), u);
}

#[test]
fn two_elements_share_one_face() {
    let dm = setup([2, 1, 1], 3, 0);
    let gs = build_gsmap(&dm);
    assert_eq!(gs.num_groups(), 16);
    assert_eq!(gs.n_gs(), 32);
    let mut l = Ledger::new(8);
    gather_scatter(&Field::<f64>::zeros(dm.len()), &gs, &mut l).unwrap();
    assert_eq!(l.words(Traffic::GatherScatter).read, 32);
    assert_eq!(l.words(Traffic::GatherScatter).written, 32);
}

#[test]
fn dot3_of_continuous_fields_counts_each_dof_once() {
    let dm = setup([3, 2, 2], 2, 4);
    let mut r = rng(1);
    let u = random_continuous(&dm, &mut r);
    let v = random_continuous(&dm, &mut r);
    let (uu, vv) = (to_unique(&u, &dm), to_unique(&v, &dm));
    let expect: f64 = uu.iter().zip(&vv).map(|(a, b)| a * b).sum();
    assert!((dot3(&u, &v, &dm).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn mask_zeroes_exactly_the_boundary() {
    let dm = setup([2, 2, 3], 3, 2);
    let masked = mask_dirichlet(&Field::constant(dm.len(), 1.0f64), &dm).unwrap();
    for (m, on) in masked.iter().zip(dm.dirichlet_mask()) {
        assert_eq!(*m, if *on { 0.0 } else { 1.0 });
    }
    let interior = interior_ids(&dm).len();
    assert_eq!(interior + dm.n_boundary_unique(), dm.n_unique());
}

#[test]
fn length_mismatch_is_an_error() {
    let dm = setup([1, 1, 2], 2, 0);
    let gs = build_gsmap(&dm);
    assert!(gather_scatter(&Field::<f64>::zeros(3), &gs, &mut Ledger::new(8)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn groups_partition_shared_points(ex in 1usize..4, ey in 1usize..4, ez in 1usize..4, order in 1usize..5, seed in 0u64..100) {
        let dm = setup([ex, ey, ez], order, seed);
        let gs = build_gsmap(&dm);
        let mut seen = vec![false; dm.len()];
        let mut total = 0;
        for g in gs.groups() {
            prop_assert!(g.len() >= 2);
            prop_assert!(g.windows(2).all(|w| w[0] < w[1]));
            let id = dm.global_id()[g[0]];
            for &p in g {
                prop_assert!(!seen[p]);
                seen[p] = true;
                prop_assert_eq!(dm.global_id()[p], id);
                prop_assert_eq!(dm.multiplicity()[p] as usize, g.len());
            }
            total += g.len();
        }
        prop_assert_eq!(total, gs.n_gs());
        prop_assert_eq!(gs.flops(), (gs.n_gs() - gs.num_groups()) as u64);
    }

    #[test]
    fn adjoint_identity(ex in 1usize..4, ey in 1usize..3, order in 1usize..5, seed in 0u64..50) {
        let dm = setup([ex, ey, 2], order, seed);
        let gs = build_gsmap(&dm);
        let mut r = rng(seed);
        let u = random_field(dm.len(), &mut r);
        let v = random_field(dm.len(), &mut r);
        let mut l = Ledger::new(8);
        let gu = gather_scatter(&u, &gs, &mut l).unwrap();
        let gv = gather_scatter(&v, &gs, &mut l).unwrap();
        let a: f64 = gu.iter().zip(v.iter()).map(|(x, y)| x * y).sum();
        let b: f64 = u.iter().zip(gv.iter()).map(|(x, y)| x * y).sum();
        prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn result_is_continuous(ex in 1usize..4, ez in 1usize..4, order in 1usize..6, seed in 0u64..50) {
        let dm = setup([ex, 2, ez], order, seed);
        let gs = build_gsmap(&dm);
        let u = random_field(dm.len(), &mut rng(seed + 7));
        let g = gather_scatter(&u, &gs, &mut Ledger::new(8)).unwrap();
        let uniq = to_unique(&g, &dm);
        for (v, &id) in g.iter().zip(dm.global_id()) {
            prop_assert_eq!(*v, uniq[id]);
        }
    }
}
