use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

/// Split of the samples into treatment (`Ω = 1`) and control (`Ω = 0`) groups
/// induced by one binarized feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentAssignment {
    pub omega: Vec<bool>,
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
}

impl TreatmentAssignment {
    pub fn from_omega(omega: Vec<bool>) -> Result<Self> {
        let treated: Vec<usize> = omega.iter().enumerate().filter(|(_, &o)| o).map(|(i, _)| i).collect();
        let control: Vec<usize> = omega.iter().enumerate().filter(|(_, &o)| !o).map(|(i, _)| i).collect();
        if treated.is_empty() || control.is_empty() {
            return Err(Error::DegenerateSplit);
        }
        Ok(Self {
            omega,
            treated,
            control,
        })
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Signed group weights `a_i = Ω_i/|∇| − (1 − Ω_i)/|Δ|`.
    ///
    /// The symmetric discrepancy kernel is `K = a aᵀ`, so every balancing
    /// quadratic form reduces to inner products with `a`.
    pub fn contrast(&self) -> Vector {
        let nt = self.treated.len() as f64;
        let nc = self.control.len() as f64;
        Vector::from_iterator(
            self.omega.len(),
            self.omega.iter().map(|&o| if o { 1.0 / nt } else { -1.0 / nc }),
        )
    }

    /// The dense `n × n` discrepancy kernel `K`.
    pub fn kernel_matrix(&self) -> Mat {
        let a = self.contrast();
        &a * a.transpose()
    }
}

/// Binarize a feature: values above the row median are treated, ties go to
/// control. Rows that are already `{0, 1}` use `value == 1` as treatment.
pub fn binarize_treatment(feature: &[f64]) -> Result<TreatmentAssignment> {
    if feature.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("non-finite treatment feature".into()));
    }
    let binary = feature.iter().all(|&v| v == 0.0 || v == 1.0);
    let omega = if binary {
        feature.iter().map(|&v| v == 1.0).collect()
    } else {
        let med = median(feature);
        feature.iter().map(|&v| v > med).collect()
    };
    TreatmentAssignment::from_omega(omega)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_split() {
        let t = binarize_treatment(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.omega, vec![false, false, true, true]);
        assert_eq!(t.treated, vec![2, 3]);
        assert_eq!(t.control, vec![0, 1]);
    }

    #[test]
    fn constant_row_is_degenerate() {
        assert!(matches!(
            binarize_treatment(&[5.0; 4]),
            Err(Error::DegenerateSplit)
        ));
    }

    #[test]
    fn binary_rows_use_value_one() {
        let t = binarize_treatment(&[0.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(t.omega, vec![false, true, false, true, true]);
        assert_eq!(t.treated.len(), 3);
        assert_eq!(t.control.len(), 2);
    }

    #[test]
    fn kernel_entries_follow_group_sizes() {
        let t = binarize_treatment(&[0.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        let k = t.kernel_matrix();
        assert!((k[(1, 3)] - 1.0 / 9.0).abs() < 1e-15);
        assert!((k[(0, 2)] - 1.0 / 4.0).abs() < 1e-15);
        assert!((k[(0, 1)] + 1.0 / 6.0).abs() < 1e-15);
        assert!((k[(1, 0)] - k[(0, 1)]).abs() < 1e-15);
    }
}
