use std::sync::Arc;

use proptest::prelude::*;

use opsys_core::opsys::{make_full, make_linf, make_subsystem};
use opsys_core::riesz::{interpolant, interpolate, InterpolationInstance};
use opsys_core::scalar::ratio;
use opsys_core::sdp::{replay_check, Method, Status};
use opsys_core::Herm;

const TOL: f64 = 1e-9;

fn diag_list(n: usize, len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Vec<i64>>> {
    proptest::collection::vec(proptest::collection::vec(-4i64..=4, n), len)
}

fn herms(v: &[Vec<i64>]) -> Vec<Herm> {
    v.iter().map(|d| Herm::from_real_diag(&d.iter().map(|x| *x as f64).collect::<Vec<_>>())).collect()
}

/// In `ℓ∞_n` the best margin is half the smallest coordinatewise gap.
fn coordinate_margin(lower: &[Vec<i64>], upper: &[Vec<i64>]) -> (i64, i64) {
    let n = lower[0].len();
    let gap = (0..n)
        .map(|i| upper.iter().map(|y| y[i]).min().unwrap() - lower.iter().map(|x| x[i]).max().unwrap())
        .min()
        .unwrap();
    (gap, 2)
}

fn linf_case() -> impl Strategy<Value = (Vec<Vec<i64>>, Vec<Vec<i64>>)> {
    (1usize..=5).prop_flat_map(|n| (diag_list(n, 1..=3), diag_list(n, 1..=3)))
}

fn m2_case() -> impl Strategy<Value = (Vec<Herm>, Vec<Herm>)> {
    let h = (-3i32..=3, -3i32..=3, -3i32..=3, -3i32..=3).prop_map(|(a, d, re, im)| {
        let z = num_complex::Complex::new(re as f64 / 2.0, im as f64 / 2.0);
        Herm::from_fn(2, |i, j| match (i, j) {
            (0, 0) => (a as f64).into(),
            (1, 1) => (d as f64).into(),
            (0, 1) => z,
            _ => z.conj(),
        })
        .unwrap()
    });
    (proptest::collection::vec(h.clone(), 1..=2), proptest::collection::vec(h, 1..=2))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linf_margin_is_half_the_gap((lower, upper) in linf_case()) {
        let n = lower[0].len();
        let inst = InterpolationInstance::new(Arc::new(make_linf(n).unwrap()), herms(&lower), herms(&upper)).unwrap();
        let v = interpolate(&inst, TOL).unwrap();
        prop_assert_eq!(v.method, Method::ExactLp);
        let (g, d) = coordinate_margin(&lower, &upper);
        prop_assert_eq!(v.status == Status::Feasible, g > 0);
        prop_assert!(replay_check(&inst.lmi(), &v, 0.0).unwrap());
        if let Some(ex) = v.witness.as_ref().and_then(|w| w.exact.as_ref()) {
            prop_assert_eq!(ex.delta.clone(), ratio(g, d));
        }
    }

    #[test]
    fn shifting_and_scaling_preserve_the_verdict((lower, upper) in linf_case(), c in -3i64..=3, s in 1i64..=4) {
        let n = lower[0].len();
        let inst = InterpolationInstance::new(Arc::new(make_linf(n).unwrap()), herms(&lower), herms(&upper)).unwrap();
        let base = interpolate(&inst, TOL).unwrap().status;
        prop_assert_eq!(interpolate(&inst.shifted(c as f64), TOL).unwrap().status, base);
        prop_assert_eq!(interpolate(&inst.scaled(s as f64), TOL).unwrap().status, base);
    }

    #[test]
    fn more_constraints_never_help((lower, upper) in linf_case(), extra in proptest::collection::vec(-4i64..=4, 5)) {
        let n = lower[0].len();
        let sys = Arc::new(make_linf(n).unwrap());
        let inst = InterpolationInstance::new(sys.clone(), herms(&lower), herms(&upper)).unwrap();
        let mut more = lower.clone();
        more.push(extra[..n].to_vec());
        let tighter = InterpolationInstance::new(sys, herms(&more), herms(&upper)).unwrap();
        if interpolate(&tighter, TOL).unwrap().status == Status::Feasible {
            prop_assert_eq!(interpolate(&inst, TOL).unwrap().status, Status::Feasible);
        }
    }

    #[test]
    fn subsystem_feasibility_implies_ambient((lower, upper) in linf_case()) {
        // the span of the data plus the unit is the smallest system holding it
        let n = lower[0].len();
        let l = make_linf(n).unwrap();
        let (lo, up) = (herms(&lower), herms(&upper));
        let gens: Vec<Herm> = lo.iter().chain(&up).cloned().collect();
        let small = Arc::new(make_subsystem(&l, &gens, "span").unwrap());
        let inst = InterpolationInstance::new(Arc::new(l), lo, up).unwrap();
        if interpolate(&inst.in_system(small).unwrap(), TOL).unwrap().status == Status::Feasible {
            prop_assert_eq!(interpolate(&inst, TOL).unwrap().status, Status::Feasible);
        }
    }

    #[test]
    fn amplified_witness_still_interpolates((lower, upper) in linf_case()) {
        let n = lower[0].len();
        let inst = InterpolationInstance::new(Arc::new(make_linf(n).unwrap()), herms(&lower), herms(&upper)).unwrap();
        let v = interpolate(&inst, TOL).unwrap();
        if v.is_feasible() {
            let a = interpolant(&inst, &v).unwrap();
            prop_assert!(inst.amplify(2).unwrap().replay_interpolant(&a.kron(&Herm::identity(2)), 1e-9).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn m2_verdicts_replay_and_respect_a_witness_check((lower, upper) in m2_case()) {
        let inst = InterpolationInstance::new(Arc::new(make_full(2).unwrap()), lower, upper).unwrap();
        let v = interpolate(&inst, TOL).unwrap();
        prop_assert_eq!(v.method == Method::ExactLp, inst.lmi().is_diagonal());
        if v.is_feasible() {
            prop_assert!(replay_check(&inst.lmi(), &v, 1e-7).unwrap());
            let a = interpolant(&inst, &v).unwrap();
            prop_assert!(inst.margin_of(&a) > 0.0);
        }
        // a large enough gap always interpolates
        let wide = InterpolationInstance::new(
            inst.system.clone(),
            inst.lower.iter().map(|x| x.shift(-10.0)).collect(),
            inst.upper.iter().map(|y| y.shift(10.0)).collect(),
        )
        .unwrap();
        prop_assert_eq!(interpolate(&wide, TOL).unwrap().status, Status::Feasible);
    }
}
