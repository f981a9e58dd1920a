use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use scres::stats::{paired_t_test, t_two_sided_p, PairedSample};

fn sample() -> impl Strategy<Value = PairedSample> {
    (2usize..30).prop_flat_map(|n| {
        (prop::collection::vec(1e4..1e7f64, n), prop::collection::vec(1e4..1e7f64, n)).prop_map(move |(a, b)| {
            PairedSample::new((0..n).map(|i| format!("LER{i}")).collect(), a, b).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn swapping_groups_negates_t(s in sample()) {
        let r = paired_t_test(&s).unwrap();
        let swapped = PairedSample { group_a: s.group_b.clone(), group_b: s.group_a.clone(), ..s };
        let q = paired_t_test(&swapped).unwrap();
        prop_assert_eq!(q.t_statistic, -r.t_statistic);
        prop_assert_eq!(q.p_value, r.p_value);
    }

    #[test]
    fn common_offset_changes_nothing(s in sample(), c in 1.0..1e5f64) {
        let r = paired_t_test(&s).unwrap();
        let shifted = PairedSample {
            group_a: s.group_a.iter().map(|x| x + c).collect(),
            group_b: s.group_b.iter().map(|x| x + c).collect(),
            ..s
        };
        let q = paired_t_test(&shifted).unwrap();
        prop_assert!((q.t_statistic - r.t_statistic).abs() <= 1e-6 * (1.0 + r.t_statistic.abs()));
        prop_assert!((q.p_value.unwrap() - r.p_value.unwrap()).abs() <= 1e-6);
    }

    #[test]
    fn p_decreases_with_abs_t(t in 0.0..50.0f64, dt in 0.01..5.0f64, dof in 1.0..60.0f64) {
        prop_assert!(t_two_sided_p(t + dt, dof) < t_two_sided_p(t, dof));
        prop_assert_eq!(t_two_sided_p(-t, dof), t_two_sided_p(t, dof));
    }

    #[test]
    fn p_matches_student_t_cdf(t in -8.0..8.0f64, dof in 1u32..80) {
        let d = StudentsT::new(0.0, 1.0, dof as f64).unwrap();
        let want = 2.0 * d.cdf(-t.abs());
        prop_assert!((t_two_sided_p(t, dof as f64) - want).abs() < 1e-12);
    }
}

#[test]
fn confidence_interval_contains_mean() {
    let s = PairedSample::new(
        (0..12).map(|i| format!("LER{i}")).collect(),
        (0..12).map(|i| 3e5 + 1e4 * i as f64).collect(),
        (0..12).map(|i| 5e5 + 1.5e4 * i as f64 + 7e3 * (i % 3) as f64).collect(),
    )
    .unwrap();
    let r = paired_t_test(&s).unwrap();
    assert!(r.ci95.0 < r.mean_difference && r.mean_difference < r.ci95.1);
    assert_eq!(r.dof, 11);
}
