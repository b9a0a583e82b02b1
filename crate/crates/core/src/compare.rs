//! Pointwise comparison of two nodal fields.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct FieldComparison {
    pub linf: f64,
    /// Plain root of summed squares, not normalized by node count.
    pub l2: f64,
    /// `a - b`, NaN where excluded.
    #[serde(skip)]
    pub diff: Vec<f64>,
    pub compared: usize,
    pub excluded: usize,
}

/// Compares `a` and `b` where `mask` (if given) is true and both values are
/// finite. Infinite-vs-infinite entries are equal and excluded; finite vs
/// infinite counts as an infinite difference.
pub fn compare_fields(a: &[f64], b: &[f64], mask: Option<&[bool]>) -> Result<FieldComparison> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if let Some(m) = mask {
        if m.len() != a.len() {
            return Err(Error::LengthMismatch { left: a.len(), right: m.len() });
        }
    }
    let mut linf = 0.0f64;
    let mut sum = 0.0;
    let mut diff = vec![f64::NAN; a.len()];
    let (mut compared, mut excluded) = (0, 0);
    for i in 0..a.len() {
        let keep = mask.is_none_or(|m| m[i]);
        if !keep || (a[i].is_infinite() && b[i].is_infinite() && a[i] == b[i]) || a[i].is_nan() || b[i].is_nan() {
            excluded += 1;
            continue;
        }
        let d = a[i] - b[i];
        diff[i] = d;
        linf = linf.max(d.abs());
        sum += d * d;
        compared += 1;
    }
    Ok(FieldComparison { linf, l2: sum.sqrt(), diff, compared, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms() {
        let c = compare_fields(&[1.0, 2.0, 3.0], &[1.0, 0.0, 6.0], None).unwrap();
        assert_eq!(c.linf, 3.0);
        assert!((c.l2 - 13f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.diff, vec![0.0, 2.0, -3.0]);
    }

    #[test]
    fn mask_and_infinities() {
        let inf = f64::INFINITY;
        let c = compare_fields(&[inf, 1.0, 5.0], &[inf, 2.0, 0.0], Some(&[true, true, false])).unwrap();
        assert_eq!(c.linf, 1.0);
        assert_eq!((c.compared, c.excluded), (1, 2));
        assert!(c.diff[0].is_nan() && c.diff[2].is_nan());
        let c = compare_fields(&[inf], &[1.0], None).unwrap();
        assert_eq!(c.linf, inf);
    }

    #[test]
    fn length_mismatch() {
        assert!(compare_fields(&[1.0], &[1.0, 2.0], None).is_err());
        assert!(compare_fields(&[1.0], &[1.0], Some(&[true, false])).is_err());
    }
}
