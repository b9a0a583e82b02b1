//! Thomas algorithm for tridiagonal systems, with the factorization kept so
//! that repeated solves against a constant matrix only do the substitutions.

#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    lower: Vec<f64>,
    inv_beta: Vec<f64>,
    cprime: Vec<f64>,
}

impl TridiagonalLu {
    /// Factors the matrix with rows `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]`.
    /// `lower[0]` and `upper[n-1]` are ignored. No pivoting: the matrix should be
    /// diagonally dominant.
    pub fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Self {
        let n = diag.len();
        assert!(lower.len() == n && upper.len() == n, "tridiagonal bands differ in length");
        let mut inv_beta = vec![0.0; n];
        let mut cprime = vec![0.0; n];
        if n > 0 {
            let mut beta = diag[0];
            inv_beta[0] = 1.0 / beta;
            for i in 1..n {
                cprime[i] = upper[i - 1] / beta;
                beta = diag[i] - lower[i] * cprime[i];
                inv_beta[i] = 1.0 / beta;
            }
        }
        TridiagonalLu {
            lower: lower.to_vec(),
            inv_beta,
            cprime,
        }
    }

    pub fn len(&self) -> usize {
        self.inv_beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_beta.is_empty()
    }

    /// Overwrites `rhs` with the solution.
    pub fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        assert_eq!(n, self.len());
        if n == 0 {
            return;
        }
        rhs[0] *= self.inv_beta[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_beta[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.cprime[i + 1] * rhs[i + 1];
        }
    }
}
