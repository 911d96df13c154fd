use std::sync::Arc;

use num_complex::Complex;
use proptest::prelude::*;

use opsys_core::cpmaps::{choi_blocks, cp_check, cp_leq, is_cp, CpMap};
use opsys_core::linalg::CMatrix;
use opsys_core::opsys::{make_full, OperatorSystem};
use opsys_core::Herm;

const TOL: f64 = 1e-9;

fn rect(rows: usize, cols: usize) -> impl Strategy<Value = CMatrix<f64>> {
    proptest::collection::vec((-2i32..=2, -2i32..=2), rows * cols).prop_map(move |v| {
        CMatrix::from_fn(rows, cols, |i, j| {
            let (re, im) = v[i * cols + j];
            Complex::new(re as f64 / 2.0, im as f64 / 2.0)
        })
    })
}

fn hermitian(m: CMatrix<f64>) -> Herm {
    Herm::new((&m + m.adjoint()).map(|z| z * 0.5)).unwrap()
}

/// `x ↦ Σ K x K* + c·B xᵀ B*`.
fn kraus_map(dom: &Arc<OperatorSystem>, kraus: &[CMatrix<f64>], b: &CMatrix<f64>, c: f64) -> CpMap {
    let m = kraus[0].nrows();
    CpMap::from_fn(dom.clone(), m, |x| {
        let xm = x.as_matrix();
        let mut out = kraus.iter().fold(CMatrix::zeros(m, m), |acc, k| acc + k * xm * k.adjoint());
        out += (b * xm.transpose() * b.adjoint()).map(|z| z * c);
        hermitian(out)
    })
    .unwrap()
}

fn map_case(d: usize, m: usize) -> impl Strategy<Value = (Vec<CMatrix<f64>>, CMatrix<f64>, i32)> {
    (proptest::collection::vec(rect(m, d), 1..=2), rect(m, d), -2i32..=1)
}

fn block_sum(f: &CpMap, g: &CpMap) -> CpMap {
    let values = f.values().iter().zip(g.values()).map(|(a, b)| Herm::direct_sum(&[a.clone(), b.clone()]).unwrap()).collect();
    CpMap::new(f.domain().clone(), f.codomain_dim() + g.codomain_dim(), values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kraus_maps_are_cp((kraus, _, _) in map_case(2, 2)) {
        let dom = Arc::new(make_full(2).unwrap());
        let f = kraus_map(&dom, &kraus, &CMatrix::zeros(2, 2), 0.0);
        prop_assert!(is_cp(&f, TOL).unwrap());
    }

    #[test]
    fn cp_is_decided_block_by_block(f in map_case(2, 2), g in map_case(2, 1)) {
        let dom = Arc::new(make_full(2).unwrap());
        let f = kraus_map(&dom, &f.0, &f.1, f.2 as f64 / 2.0);
        let g = kraus_map(&dom, &g.0, &g.1, g.2 as f64 / 2.0);
        let sum = block_sum(&f, &g);
        let whole = cp_check(&sum, TOL).unwrap();
        prop_assume!(whole.min_choi_eig.is_none_or(|e| e.abs() > 1e-6));
        prop_assert_eq!(whole.cp, is_cp(&sum.compress(0, 2), TOL).unwrap() && is_cp(&sum.compress(2, 1), TOL).unwrap());
    }

    #[test]
    fn choi_spectrum_oracle(f in map_case(2, 2)) {
        // CP iff the Choi matrix Σ E_ij ⊗ f(E_ij) is PSD, assembled here by hand
        let dom = Arc::new(make_full(2).unwrap());
        let f = kraus_map(&dom, &f.0, &f.1, f.2 as f64 / 2.0);
        let mut choi = CMatrix::<f64>::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                let mut e = CMatrix::<f64>::zeros(2, 2);
                e[(i, j)] = Complex::new(1.0, 0.0);
                let re = hermitian(e.clone() + e.adjoint());
                let im = hermitian((e.clone() - e.adjoint()).map(|z| z * Complex::new(0.0, -1.0)));
                // f(E_ij) = (f(E_ij + E_ji) + i f(−i(E_ij − E_ji))) / 2
                let v = (f.apply(&re).unwrap().as_matrix() + f.apply(&im).unwrap().as_matrix().map(|z| z * Complex::new(0.0, 1.0)))
                    .map(|z| z * 0.5);
                choi.view_mut((i * 2, j * 2), (2, 2)).copy_from(&v);
            }
        }
        let oracle = Herm::new(choi).unwrap().min_eig();
        prop_assume!(oracle.abs() > 1e-6);
        prop_assert_eq!(is_cp(&f, TOL).unwrap(), oracle > 0.0);
        let blocks = choi_blocks(&f).unwrap();
        prop_assert!((blocks.iter().map(Herm::min_eig).fold(f64::INFINITY, f64::min) - oracle).abs() < 1e-8);
    }

    #[test]
    fn cp_order_is_reflexive_and_added_cp_maps_dominate(f in map_case(2, 2), g in map_case(2, 2)) {
        let dom = Arc::new(make_full(2).unwrap());
        let f = kraus_map(&dom, &f.0, &f.1, f.2 as f64 / 2.0);
        let g = kraus_map(&dom, &g.0, &CMatrix::zeros(2, 2), 0.0);
        prop_assert!(cp_leq(&f, &f, TOL).unwrap());
        prop_assert!(cp_leq(&f, &f.add(&g).unwrap(), TOL).unwrap());
    }
}
