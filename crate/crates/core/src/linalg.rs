//! Small dense helpers shared by the solvers.

use nalgebra::DMatrix;

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Largest eigenvalue modulus, from the real Schur form.
///
/// Power iteration is not used: rate matrices of this model are often
/// reducible (zero rows, decoupled phase classes) and the Collatz-Wielandt
/// bounds it relies on need irreducibility.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    assert!(a.is_square());
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Neumaier-compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_radius_of_known_matrices() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 0.1, 0.2]);
        // eigenvalues of [[0.5, 0.25], [0.1, 0.2]]: (0.7 ± sqrt(0.09 + 0.1)) / 2
        let expected = (0.7 + 0.19f64.sqrt()) / 2.0;
        assert!((spectral_radius(&a) - expected).abs() < 1e-12);

        // periodic
        let p = DMatrix::from_row_slice(3, 3, &[0.0, 0.9, 0.0, 0.0, 0.0, 0.9, 0.9, 0.0, 0.0]);
        assert!((spectral_radius(&p) - 0.9).abs() < 1e-12);

        // reducible with a zero row
        let r = DMatrix::from_row_slice(3, 3, &[0.3, 0.1, 0.0, 0.0, 0.6, 0.2, 0.0, 0.0, 0.0]);
        assert!((spectral_radius(&r) - 0.6).abs() < 1e-9);

        assert_eq!(spectral_radius(&DMatrix::zeros(4, 4)), 0.0);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s: CompensatedSum = [1.0, 1e100, 1.0, -1e100].into_iter().collect();
        assert_eq!(s.value(), 2.0);
    }
}
