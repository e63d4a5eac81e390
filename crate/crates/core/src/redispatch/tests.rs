use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;

fn limits(p_max: &[f64], ramp_frac: f64) -> Vec<FeatureLimits> {
    p_max
        .iter()
        .enumerate()
        .map(|(i, &p)| FeatureLimits {
            id: alloc::format!("G{}", i + 1),
            p_min: 0.2 * p,
            p_max: p,
            ramp: ramp_frac * p,
        })
        .collect()
}

fn plain_bounds(lower: &[f64], upper: &[f64]) -> DispatchBounds {
    DispatchBounds {
        feature_ids: (0..lower.len()).map(|i| alloc::format!("f{i}")).collect(),
        lower: lower.to_vec(),
        upper: upper.to_vec(),
        capacity: vec![(0.0, 1.0); lower.len()],
        at_limit: vec![false; lower.len()],
    }
}

/// Best objective over all vertices of {lo <= y <= hi, optional sum y = 0}.
fn vertex_oracle(psi: &[f64], lo: &[f64], hi: &[f64], balance: bool) -> Option<f64> {
    let m = psi.len();
    let mut best: Option<f64> = None;
    let mut consider = |y: &[f64]| {
        let v: f64 = psi.iter().zip(y).map(|(p, x)| p * x).sum();
        best = Some(best.map_or(v, |b: f64| b.max(v)));
    };
    if !balance {
        for mask in 0..(1u32 << m) {
            let y: Vec<f64> = (0..m).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect();
            consider(&y);
        }
        return best;
    }
    for free in 0..m {
        for mask in 0..(1u32 << m) {
            if mask >> free & 1 == 1 {
                continue;
            }
            let mut y: Vec<f64> = (0..m).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect();
            let rest: f64 = (0..m).filter(|&i| i != free).map(|i| y[i]).sum();
            y[free] = -rest;
            if y[free] >= lo[free] - 1e-12 && y[free] <= hi[free] + 1e-12 {
                consider(&y);
            }
        }
    }
    best
}

#[test]
fn bounds_far_from_limits_are_the_ramp() {
    let lim = limits(&[9.0, 9.0], 0.05);
    let b = compute_bounds(&[5.0, 6.0], &lim, false).unwrap();
    for i in 0..2 {
        assert!((b.lower[i] + 0.45).abs() < 1e-15);
        assert!((b.upper[i] - 0.45).abs() < 1e-15);
        assert!(!b.at_limit[i]);
    }
}

#[test]
fn bounds_at_capacity() {
    let lim = limits(&[9.0], 0.05);
    let b = compute_bounds(&[9.0], &lim, false).unwrap();
    assert_eq!(b.upper[0], 0.0);
    assert!(b.at_limit[0]);
    // reserve widens the window by 1.8, so the ramp binds again
    let b = compute_bounds(&[9.0], &lim, true).unwrap();
    assert!((b.upper[0] - 0.45).abs() < 1e-15);
    assert!(!b.at_limit[0]);
    assert!(compute_bounds(&[9.5], &lim, false).is_err());
    assert!(compute_bounds(&[1.0], &lim, false).is_err());
}

#[test]
fn antisymmetric_pair_with_balance() {
    let lp = build_lp(&[1.0, -1.0], &plain_bounds(&[-1.0, -1.0], &[1.0, 1.0]), &[0.0, 0.0], true).unwrap();
    let s = solve_lp(&lp);
    assert_eq!(s.status, LpStatus::Optimal);
    assert_eq!(s.dx_r, vec![1.0, -1.0]);
    assert_eq!(s.delta, 2.0);
    assert!(s.binding.contains(&Binding::Upper(0)) && s.binding.contains(&Binding::Lower(1)));
}

#[test]
fn zero_sensitivity_gives_zero_redispatch() {
    for balance in [false, true] {
        let lp = build_lp(&[0.0; 3], &plain_bounds(&[-1.0, -0.5, -2.0], &[1.0, 0.3, 2.0]), &[0.0; 3], balance).unwrap();
        let s = solve_lp(&lp);
        assert_eq!(s.status, LpStatus::Degenerate);
        assert_eq!(s.delta, 0.0);
        assert_eq!(s.dx_r, vec![0.0; 3]);
    }
}

#[test]
fn single_variable_without_balance() {
    let lp = build_lp(&[0.5], &plain_bounds(&[-2.0], &[2.0]), &[0.0], false).unwrap();
    let s = solve_lp(&lp);
    assert_eq!(s.dx_r, vec![2.0]);
    assert_eq!(s.delta, 1.0);
}

#[test]
fn fixed_feature_with_spilling_plan_is_infeasible() {
    let mut b = plain_bounds(&[-0.1, -0.1], &[0.1, 0.1]);
    b.at_limit[0] = true;
    let lp = build_lp(&[1.0, -1.0], &b, &[0.3, 0.0], true).unwrap();
    assert_eq!(solve_lp(&lp).status, LpStatus::Infeasible);
    // balance that cannot close
    let lp = build_lp(&[1.0, 1.0], &plain_bounds(&[0.1, 0.2], &[0.5, 0.5]), &[0.0, 0.0], true);
    assert_eq!(solve_lp(&lp.unwrap()).status, LpStatus::Infeasible);
}

#[test]
fn empty_feature_set_is_rejected() {
    assert!(matches!(build_lp(&[], &plain_bounds(&[], &[]), &[], true), Err(Error::LpBuild(_))));
}

#[test]
fn tie_group_splits_evenly() {
    let lp = build_lp(&[1.0, 1.0, -2.0], &plain_bounds(&[-1.0; 3], &[1.0; 3]), &[0.0; 3], true).unwrap();
    let s = solve_lp(&lp);
    assert_eq!(s.status, LpStatus::Degenerate);
    assert!((s.dx_r[0] - 0.5).abs() < 1e-15 && (s.dx_r[1] - 0.5).abs() < 1e-15);
    assert_eq!(s.dx_r[2], -1.0);
    assert!((s.delta - 3.0).abs() < 1e-15);
}

#[test]
fn dump_lists_every_row() {
    let mut b = plain_bounds(&[-0.5, -0.25], &[0.5, 0.25]);
    b.feature_ids = vec!["G1".to_string(), "G4".to_string()];
    b.at_limit[1] = true;
    let lp = build_lp(&[-0.0013, 0.0002], &b, &[0.0, 0.0], true).unwrap();
    let text = alloc::format!("{lp}");
    let expect = "max delta\n\
damping: -0.0013 dxR[G1] +0.0002 dxR[G4] -1 delta >= 0\n\
lower G1: 1 dxR[G1] >= -0.5\n\
upper G1: 1 dxR[G1] <= 0.5\n\
fixed G4: 1 dxR[G4] = 0\n\
balance: +1 dxR[G1] +1 dxR[G4] = 0\n";
    assert_eq!(text, expect);
}

#[test]
fn redistribution_examples() {
    let b = plain_bounds(&[-0.3, -0.3], &[0.3, 0.3]);
    assert_eq!(redistribute_planned(&[0.1, -0.05], &[false, false], &b).unwrap(), vec![0.1, -0.05]);

    let b = plain_bounds(&[-0.3, -0.3], &[0.3, 0.0]);
    let out = redistribute_planned(&[0.0, 0.1], &[false, true], &b).unwrap();
    assert!((out[0] - 0.1).abs() < 1e-15 && out[1] == 0.0);

    let b = plain_bounds(&[-0.3, -0.3, -0.3], &[0.2, 0.1, 0.0]);
    let out = redistribute_planned(&[0.0, 0.0, 0.06], &[false, false, true], &b).unwrap();
    assert!((out[0] - 0.04).abs() < 1e-15);
    assert!((out[1] - 0.02).abs() < 1e-15);
    assert_eq!(out[2], 0.0);

    let b = plain_bounds(&[-0.3, -0.3], &[0.01, 0.0]);
    assert!(matches!(
        redistribute_planned(&[0.0, 0.1], &[false, true], &b),
        Err(Error::NoHeadroom { .. })
    ));
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, bool)> {
    (2usize..=4).prop_flat_map(|m| {
        (
            proptest::collection::vec(-0.01f64..0.01, m),
            proptest::collection::vec(-1.0f64..0.0, m),
            proptest::collection::vec(0.0f64..1.0, m),
            proptest::collection::vec(-0.3f64..0.3, m),
            any::<bool>(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn optimum_matches_vertex_enumeration((psi, lo, hi, planned, balance) in instance()) {
        let b = plain_bounds(&lo, &hi);
        let lp = build_lp(&psi, &b, &planned, balance).unwrap();
        let s = solve_lp(&lp);
        let ylo: Vec<f64> = (0..psi.len()).map(|i| lo[i] - planned[i]).collect();
        let yhi: Vec<f64> = (0..psi.len()).map(|i| hi[i] - planned[i]).collect();
        let best = vertex_oracle(&psi, &ylo, &yhi, balance);
        match best {
            Some(v) => {
                prop_assert_ne!(s.status, LpStatus::Infeasible);
                prop_assert!((s.delta - (v + lp.planned_gain())).abs() <= 1e-9);
                // feasibility of the returned point
                for i in 0..psi.len() {
                    let x = s.dx_r[i] + planned[i];
                    prop_assert!(x >= lo[i] - 1e-9 && x <= hi[i] + 1e-9);
                }
                if balance {
                    prop_assert!(s.dx_r.iter().sum::<f64>().abs() <= 1e-9);
                }
                let implied: f64 = psi.iter().zip(&s.dx_r).zip(&planned).map(|((p, r), o)| p * (r + o)).sum();
                prop_assert!(implied >= s.delta - 1e-9);
            }
            None => prop_assert_eq!(s.status, LpStatus::Infeasible),
        }
    }

    #[test]
    fn no_harm_when_standing_still_is_feasible((psi, lo, hi, _p, balance) in instance()) {
        let lp = build_lp(&psi, &plain_bounds(&lo, &hi), &vec![0.0; psi.len()], balance).unwrap();
        let s = solve_lp(&lp);
        prop_assert!(s.delta >= 0.0);
    }

    #[test]
    fn scaling_sensitivity_scales_delta((psi, lo, hi, planned, balance) in instance(), c in 0.1f64..10.0) {
        let b = plain_bounds(&lo, &hi);
        let s1 = solve_lp(&build_lp(&psi, &b, &planned, balance).unwrap());
        let scaled: Vec<f64> = psi.iter().map(|p| c * p).collect();
        let s2 = solve_lp(&build_lp(&scaled, &b, &planned, balance).unwrap());
        prop_assert_eq!(s1.status == LpStatus::Infeasible, s2.status == LpStatus::Infeasible);
        if s1.status != LpStatus::Infeasible {
            prop_assert!((s2.delta - c * s1.delta).abs() <= 1e-9 * (1.0 + s2.delta.abs()));
            for (a, b) in s1.dx_r.iter().zip(&s2.dx_r) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn redistribution_conserves_total(
        planned in proptest::collection::vec(-0.2f64..0.2, 4),
        limit in proptest::collection::vec(any::<bool>(), 4),
        room in proptest::collection::vec(0.0f64..0.5, 4),
    ) {
        let lo: Vec<f64> = room.iter().map(|r| -r).collect();
        let b = plain_bounds(&lo, &room);
        if let Ok(out) = redistribute_planned(&planned, &limit, &b) {
            let before: f64 = planned.iter().sum();
            let after: f64 = out.iter().sum();
            prop_assert!((before - after).abs() <= 1e-12);
            for i in 0..4 {
                if limit[i] {
                    prop_assert!(out[i] >= lo[i] && out[i] <= room[i]);
                }
            }
        }
    }
}
