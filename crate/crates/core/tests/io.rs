use proptest::prelude::*;
use serde_json::json;

use scres::io::{canonical_json, format_float, parse_csv, to_csv};
use scres::{Complex64, ComplexTrace};

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

proptest! {
    #[test]
    fn csv_round_trip_is_bit_exact(start in 1e6..1e10f64, steps in prop::collection::vec((1e-3..1e6f64, finite(), finite()), 8..64)) {
        let mut f = start;
        let mut freqs = Vec::new();
        let mut s21 = Vec::new();
        for (df, re, im) in steps {
            f += df;
            freqs.push(f);
            s21.push(Complex64::new(re, im));
        }
        let t = ComplexTrace::new(freqs, s21).unwrap();
        let back = parse_csv(&to_csv(&t)).unwrap();
        for k in 0..t.len() {
            prop_assert_eq!(back.freqs[k].to_bits(), t.freqs[k].to_bits());
            prop_assert_eq!(back.s21[k].re.to_bits(), t.s21[k].re.to_bits());
            prop_assert_eq!(back.s21[k].im.to_bits(), t.s21[k].im.to_bits());
        }
    }

    #[test]
    fn canonical_json_is_stable(x in finite(), y in finite(), s in "[a-z]{1,8}") {
        let v = json!({ "zeta": x, "alpha": { "q": y, "unit": "Hz" }, s.clone(): [x, y] });
        let once = canonical_json(&v);
        let parsed: serde_json::Value = serde_json::from_str(&once).unwrap();
        prop_assert_eq!(canonical_json(&parsed), once.clone());
        prop_assert!(once.ends_with('\n'));
    }

    #[test]
    fn twelve_significant_digits(x in finite()) {
        let text = format_float(x);
        let back: f64 = text.parse().unwrap();
        if x != 0.0 {
            prop_assert!((back / x - 1.0).abs() <= 5e-12);
        }
        prop_assert_eq!(format_float(back), text);
    }
}
