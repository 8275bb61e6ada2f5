//! Symmetric banded matrices with an LDL^T factorization.

/// Symmetric banded matrix; only the lower band is stored.
/// Entry `(i, j)` with `i >= j`, `i - j <= kd` lives at `data[i * (kd+1) + (i-j)]`.
#[derive(Debug, Clone)]
pub struct SymBanded {
    pub n: usize,
    pub kd: usize,
    data: Vec<f64>,
}

impl SymBanded {
    pub fn zeros(n: usize, kd: usize) -> SymBanded {
        SymBanded {
            n,
            kd,
            data: vec![0.0; n * (kd + 1)],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.kd {
            0.0
        } else {
            self.data[r * (self.kd + 1) + (r - c)]
        }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        // Symmetric accumulation: callers add each unordered pair once.
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        assert!(r - c <= self.kd, "entry ({i}, {j}) outside band {}", self.kd);
        self.data[r * (self.kd + 1) + (r - c)] += v;
    }

    /// Infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        let mut norm = 0.0f64;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kd);
            let hi = (i + self.kd).min(self.n - 1);
            let row: f64 = (lo..=hi).map(|j| self.get(i, j).abs()).sum();
            norm = norm.max(row);
        }
        norm
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kd);
            let hi = (i + self.kd).min(self.n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += self.get(i, j) * x[j];
            }
            y[i] = acc;
        }
        y
    }
}

/// Banded LDL^T factorization of a symmetric positive definite matrix, with a
/// symmetric diagonal equilibration to tame penalty-dominated scaling.
pub struct BandedFactor {
    n: usize,
    kd: usize,
    /// Unit lower band of the equilibrated matrix; diagonal slot holds D.
    lower: Vec<f64>,
    /// Equilibration scale: the factored matrix is S A S, x = S y.
    scale: Vec<f64>,
    pub smallest_pivot: f64,
}

pub enum FactorOutcome {
    Factored(BandedFactor),
    /// A pivot fell below tolerance at this reduced DOF; `mode` is an
    /// approximate null direction of the equilibrated matrix.
    Breakdown { at: usize, mode: Vec<f64> },
}

impl BandedFactor {
    pub fn compute(a: &SymBanded, pivot_tol: f64) -> FactorOutcome {
        let n = a.n;
        let kd = a.kd;
        let scale: Vec<f64> = (0..n)
            .map(|i| {
                let d = a.get(i, i).abs();
                if d > 0.0 {
                    1.0 / d.sqrt()
                } else {
                    1.0
                }
            })
            .collect();

        let mut lower = vec![0.0f64; n * (kd + 1)];
        for i in 0..n {
            let lo = i.saturating_sub(kd);
            for j in lo..=i {
                lower[i * (kd + 1) + (i - j)] = a.get(i, j) * scale[i] * scale[j];
            }
        }

        let mut smallest = f64::INFINITY;
        for j in 0..n {
            let mut dj = lower[j * (kd + 1)];
            let lo = j.saturating_sub(kd);
            for k in lo..j {
                let ljk = lower[j * (kd + 1) + (j - k)];
                let dk = lower[k * (kd + 1)];
                dj -= ljk * ljk * dk;
            }
            if !(dj > pivot_tol) {
                let mode = null_direction(&lower, n, kd, j);
                return FactorOutcome::Breakdown { at: j, mode };
            }
            smallest = smallest.min(dj);
            lower[j * (kd + 1)] = dj;
            let hi = (j + kd).min(n - 1);
            for i in j + 1..=hi {
                let mut lij = lower[i * (kd + 1) + (i - j)];
                let lo2 = i.saturating_sub(kd).max(j.saturating_sub(kd));
                for k in lo2..j {
                    if i - k <= kd {
                        lij -= lower[i * (kd + 1) + (i - k)]
                            * lower[j * (kd + 1) + (j - k)]
                            * lower[k * (kd + 1)];
                    }
                }
                lower[i * (kd + 1) + (i - j)] = lij / dj;
            }
        }
        FactorOutcome::Factored(BandedFactor {
            n,
            kd,
            lower,
            scale,
            smallest_pivot: smallest,
        })
    }

    /// Solve `A x = b` using the stored factorization.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let kd = self.kd;
        let mut y: Vec<f64> = (0..n).map(|i| b[i] * self.scale[i]).collect();
        for i in 0..n {
            let lo = i.saturating_sub(kd);
            let mut acc = y[i];
            for k in lo..i {
                acc -= self.lower[i * (kd + 1) + (i - k)] * y[k];
            }
            y[i] = acc;
        }
        for i in 0..n {
            y[i] /= self.lower[i * (kd + 1)];
        }
        for i in (0..n).rev() {
            let hi = (i + kd).min(n - 1);
            let mut acc = y[i];
            for k in i + 1..=hi {
                acc -= self.lower[k * (kd + 1) + (k - i)] * y[k];
            }
            y[i] = acc;
        }
        for i in 0..n {
            y[i] *= self.scale[i];
        }
        y
    }

    /// Solve with iterative refinement against the original matrix.
    pub fn solve_refined(&self, a: &SymBanded, b: &[f64], steps: usize) -> Vec<f64> {
        let mut x = self.solve(b);
        for _ in 0..steps {
            let ax = a.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let dx = self.solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        x
    }
}

/// Approximate null direction when the factorization breaks down at column
/// `j`: solve `L^T v = e_j` over the already-factored leading block.
fn null_direction(lower: &[f64], n: usize, kd: usize, j: usize) -> Vec<f64> {
    let mut v = vec![0.0f64; n];
    v[j] = 1.0;
    for i in (0..j).rev() {
        let hi = (i + kd).min(j);
        let mut acc = 0.0;
        for k in i + 1..=hi {
            acc -= lower[k * (kd + 1) + (k - i)] * v[k];
        }
        v[i] = acc;
    }
    let norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    v
}
