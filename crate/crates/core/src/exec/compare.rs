//! Output comparison modes.

use crate::task::Comparison;

fn normalize_exact(s: &str) -> String {
    s.replace("\r\n", "\n")
        .lines()
        .map(str::trim_end)
        .collect::<Vec<_>>()
        .join("\n")
        .trim_end()
        .to_string()
}

fn numbers_close(expected: f64, actual: f64, epsilon: f64) -> bool {
    if expected.is_nan() || actual.is_nan() {
        return expected.is_nan() && actual.is_nan();
    }
    if expected.is_infinite() || actual.is_infinite() {
        return expected == actual;
    }
    (actual - expected).abs() <= epsilon * expected.abs().max(1.0)
}

/// Whether `actual` matches `expected` under `mode`.
///
/// * exact: equal after stripping trailing whitespace on every line and
///   trailing blank lines
/// * token: equal whitespace-separated token sequences
/// * float_tolerant: tokenwise; numeric tokens match when
///   `|a - b| <= eps * max(1, |b|)` with `b` the expected value, other
///   tokens must be identical
pub fn compare_output(expected: &str, actual: &str, mode: Comparison) -> bool {
    match mode {
        Comparison::Exact => normalize_exact(expected) == normalize_exact(actual),
        Comparison::Token => expected.split_whitespace().eq(actual.split_whitespace()),
        Comparison::FloatTolerant { epsilon } => {
            let e: Vec<&str> = expected.split_whitespace().collect();
            let a: Vec<&str> = actual.split_whitespace().collect();
            e.len() == a.len()
                && e.iter().zip(&a).all(|(x, y)| {
                    x == y
                        || match (x.parse::<f64>(), y.parse::<f64>()) {
                            (Ok(xe), Ok(ya)) => numbers_close(xe, ya, epsilon),
                            _ => false,
                        }
                })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_ignores_trailing_newline() {
        assert!(compare_output("42\n", "42", Comparison::Exact));
        assert!(compare_output("a \nb\n\n", "a\nb", Comparison::Exact));
        assert!(compare_output("a\r\nb", "a\nb", Comparison::Exact));
        assert!(!compare_output("1 2", "1  2", Comparison::Exact));
        assert!(!compare_output("42", "", Comparison::Exact));
    }

    #[test]
    fn token_ignores_spacing() {
        assert!(compare_output("1 2  3", "1 2 3", Comparison::Token));
        assert!(compare_output("1\n2", "1 2\n", Comparison::Token));
        assert!(!compare_output("1 2 3", "1 2", Comparison::Token));
    }

    #[test]
    fn float_tolerance() {
        // |0.333334 - 0.333333| = 1e-6; allowance is eps * max(1, 0.333333) = eps
        let ft = |epsilon| Comparison::FloatTolerant { epsilon };
        assert!(compare_output("0.333333", "0.333334", ft(1e-4)));
        assert!(!compare_output("0.333333", "0.333334", ft(1e-7)));
        // relative above magnitude 1
        assert!(compare_output("1000.0", "1000.05", ft(1e-4)));
        assert!(!compare_output("1000.0", "1000.2", ft(1e-4)));
        // non-numeric tokens compared exactly
        assert!(compare_output("ans 1.0", "ans 1.00000001", ft(1e-6)));
        assert!(!compare_output("ans 1.0", "Ans 1.0", ft(1e-6)));
        assert!(!compare_output("1.0 2.0", "1.0", ft(1e-6)));
    }

    proptest! {
        #[test]
        fn reflexive(s in "[ -~\n\t]{0,60}", eps in 1e-9f64..1.0) {
            prop_assert!(compare_output(&s, &s, Comparison::Exact));
            prop_assert!(compare_output(&s, &s, Comparison::Token));
            let ft = Comparison::FloatTolerant { epsilon: eps };
            prop_assert!(compare_output(&s, &s, ft));
        }
    }
}
