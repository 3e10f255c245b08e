use glrom_core::fom::FineOperators;
use glrom_core::grid::FineMesh;
use glrom_core::model::{ChannelLayout, Nonlinearity, PermeabilityField};
use glrom_core::reduction::{deim_select, pod, PodSelection};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pod_modes_are_orthonormal(f in matrix(30, 6), m in 1usize..6) {
        let basis = pod(&f, PodSelection::Modes(m)).unwrap();
        let g = basis.modes.transpose() * &basis.modes;
        prop_assert!((g - DMatrix::identity(m, m)).amax() < 1e-10);
        prop_assert!(basis.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn energy_selection_meets_fraction(f in matrix(25, 7), frac in 0.5f64..0.999) {
        let basis = pod(&f, PodSelection::Energy(frac)).unwrap();
        prop_assert!(basis.energy_fraction() >= frac - 1e-12);
    }

    #[test]
    fn deim_is_a_projector(f in matrix(40, 5), x in matrix(40, 1)) {
        let basis = pod(&f, PodSelection::Modes(5)).unwrap().modes;
        let model = deim_select(&basis).unwrap();
        let mut idx = model.indices.clone();
        idx.sort_unstable();
        idx.dedup();
        prop_assert_eq!(idx.len(), 5);
        let once = model.approximate(&x.column(0).into_owned()).unwrap();
        let twice = model.approximate(&once).unwrap();
        prop_assert!((&once - &twice).amax() <= 1e-9 * once.amax().max(1.0));
    }

    #[test]
    fn f_vanishes_at_zero_and_is_odd_in_the_linear_limit(seed in 0u64..1000) {
        let mesh = FineMesh::build(6, 6).unwrap();
        let kappa = PermeabilityField::channels(&mesh, 1e3, &ChannelLayout::default()).unwrap();
        let ops = FineOperators::new(&mesh, &kappa, Nonlinearity::exp()).unwrap();
        let n = ops.dim();
        prop_assert_eq!(ops.assemble_f(&DVector::zeros(n), 2.0).unwrap().amax(), 0.0);
        let u = DVector::from_fn(n, |i, _| ((i as u64 * 7919 + seed) % 13) as f64 / 13.0 - 0.5);
        let f0 = ops.assemble_f(&u, 0.0).unwrap();
        let lin = ops.stiffness.matvec(u.as_slice());
        prop_assert!((f0 + ops.assemble_f(&(-&u), 0.0).unwrap()).amax() < 1e-9 * lin.amax());
        prop_assert!((ops.assemble_f(&u, 0.0).unwrap() - &lin).amax() < 1e-9 * lin.amax());
    }
}

#[test]
fn stiffness_and_mass_are_symmetric_positive() {
    let mesh = FineMesh::build(8, 8).unwrap();
    let kappa = PermeabilityField::channels(&mesh, 1e6, &ChannelLayout::default()).unwrap();
    let ops = FineOperators::new(&mesh, &kappa, Nonlinearity::exp()).unwrap();
    for a in [&ops.stiffness, &ops.mass] {
        let d = a.to_dense();
        assert!((&d - d.transpose()).amax() <= 1e-12 * d.amax());
        assert!(d.cholesky().is_some());
    }
}
