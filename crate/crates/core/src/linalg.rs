//! Banded direct solvers used by the TFPM ground-truth solvers.

use crate::error::{Error, Result};

/// Square band matrix with `kl` sub- and `ku` super-diagonals. Rows keep
/// `kl` extra columns on the right so LU fill-in from pivoting fits.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let start = r as isize - self.kl as isize;
        let off = c as isize - start;
        if off >= 0 && (off as usize) < self.width && c < self.n {
            Some(r * self.width + off as usize)
        } else {
            None
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.slot(r, c).map_or(0.0, |i| self.data[i])
    }

    /// Panics when `(r, c)` is outside the declared band.
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(
            c + self.kl >= r && c <= r + self.ku,
            "entry ({r}, {c}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let i = self.slot(r, c).expect("inside band");
        self.data[i] = v;
    }

    fn cols(&self, r: usize) -> std::ops::Range<usize> {
        r.saturating_sub(self.kl)..(r + self.ku + 1).min(self.n)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|r| self.cols(r).map(|c| self.get(r, c) * x[c]).sum()).collect()
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|r| self.cols(r).map(|c| self.get(r, c).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// LU factorization with partial pivoting of a row-equilibrated band matrix.
#[derive(Debug, Clone)]
pub struct BandedLu {
    original: BandMatrix,
    lu: BandMatrix,
    row_scale: Vec<f64>,
    pivots: Vec<usize>,
    condition_estimate: f64,
}

fn rel_residual(a: &BandMatrix, x: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let ax = a.matvec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let rn = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let xn = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let denom = a.norm_inf() * xn + bn;
    (r, if denom > 0.0 { rn / denom } else { rn })
}

impl BandedLu {
    pub fn factor(a: &BandMatrix) -> Result<Self> {
        let n = a.n;
        let (kl, ku) = (a.kl, a.ku);
        let mut lu = a.clone();
        let mut row_scale = vec![1.0; n];
        for r in 0..n {
            let m = lu.cols(r).map(|c| lu.get(r, c).abs()).fold(0.0, f64::max);
            if m == 0.0 || !m.is_finite() {
                return Err(Error::Singular {
                    condition: f64::INFINITY,
                    detail: format!("row {r} is zero or non-finite"),
                });
            }
            row_scale[r] = 1.0 / m;
            for c in lu.cols(r) {
                let i = lu.slot(r, c).unwrap();
                lu.data[i] *= row_scale[r];
            }
        }
        let mut pivots = vec![0; n];
        let (mut pmax, mut pmin) = (0.0f64, f64::INFINITY);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let p = (k..=last)
                .max_by(|&i, &j| lu.get(i, k).abs().total_cmp(&lu.get(j, k).abs()))
                .unwrap();
            pivots[k] = p;
            let right = (k + kl + ku).min(n - 1);
            if p != k {
                for c in k..=right {
                    let (i, j) = (lu.slot(k, c).unwrap(), lu.slot(p, c).unwrap());
                    lu.data.swap(i, j);
                }
            }
            let piv = lu.get(k, k);
            pmax = pmax.max(piv.abs());
            pmin = pmin.min(piv.abs());
            if piv.abs() <= 1e-15 {
                return Err(Error::Singular {
                    condition: if pmin > 0.0 { pmax / pmin } else { f64::INFINITY },
                    detail: format!("pivot {piv:e} at column {k} of {n}"),
                });
            }
            for i in k + 1..=last {
                let l = lu.get(i, k) / piv;
                let s = lu.slot(i, k).unwrap();
                lu.data[s] = l;
                if l != 0.0 {
                    for c in k + 1..=right {
                        let ukc = lu.get(k, c);
                        if ukc != 0.0 {
                            let s = lu.slot(i, c).unwrap();
                            lu.data[s] -= l * ukc;
                        }
                    }
                }
            }
        }
        Ok(Self { original: a.clone(), lu, row_scale, pivots, condition_estimate: pmax / pmin })
    }

    /// Ratio of the largest to the smallest pivot after equilibration.
    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    fn solve_raw(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.n;
        let (kl, ku) = (self.lu.kl, self.lu.ku);
        let mut y: Vec<f64> = b.iter().zip(&self.row_scale).map(|(b, s)| b * s).collect();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                y.swap(k, p);
            }
            let yk = y[k];
            for i in k + 1..=(k + kl).min(n.saturating_sub(1)) {
                y[i] -= self.lu.get(i, k) * yk;
            }
        }
        for k in (0..n).rev() {
            let mut s = y[k];
            for c in k + 1..=(k + kl + ku).min(n - 1) {
                s -= self.lu.get(k, c) * y[c];
            }
            y[k] = s / self.lu.get(k, k);
        }
        y
    }

    /// Solves `A x = b`, refining until the relative residual
    /// `|b - A x| / (|A| |x| + |b|)` drops below `1e-10`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.solve_raw(b);
        let (mut r, mut rel) = rel_residual(&self.original, &x, b);
        for _ in 0..3 {
            if rel < 1e-14 {
                break;
            }
            let dx = self.solve_raw(&r);
            let cand: Vec<f64> = x.iter().zip(&dx).map(|(x, d)| x + d).collect();
            let (r2, rel2) = rel_residual(&self.original, &cand, b);
            if rel2 >= rel {
                break;
            }
            x = cand;
            r = r2;
            rel = rel2;
        }
        if !(rel < 1e-10) {
            return Err(Error::Singular {
                condition: self.condition_estimate,
                detail: format!("relative residual {rel:e} above 1e-10"),
            });
        }
        Ok(x)
    }
}

/// Symmetric positive definite band matrix (lower half, `k` sub-diagonals)
/// factorized by Cholesky after symmetric diagonal scaling.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    k: usize,
    /// `l[r * (k + 1) + (r - c)]` for `c` in `r - k..=r`
    l: Vec<f64>,
    scale: Vec<f64>,
}

/// Lower half of a symmetric band matrix.
#[derive(Debug, Clone)]
pub struct SymBand {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self { n, k, data: vec![0.0; n * (k + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.k
    }

    /// Adds `v` to entry `(r, c)` with `c <= r`.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(c <= r && r - c <= self.k);
        self.data[r * (self.k + 1) + (r - c)] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (r, c) = if c > r { (c, r) } else { (r, c) };
        if r - c > self.k {
            0.0
        } else {
            self.data[r * (self.k + 1) + (r - c)]
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for r in 0..self.n {
            for c in r.saturating_sub(self.k)..=r {
                let v = self.data[r * (self.k + 1) + (r - c)];
                y[r] += v * x[c];
                if c != r {
                    y[c] += v * x[r];
                }
            }
        }
        y
    }
}

impl BandedCholesky {
    /// Factorizes `D A D + shift I` with `D = diag(A)^(-1/2)`.
    pub fn factor(a: &SymBand, shift: f64) -> Result<Self> {
        let (n, k) = (a.n, a.k);
        let scale: Vec<f64> = (0..n)
            .map(|i| {
                let d = a.get(i, i);
                if d > 0.0 {
                    1.0 / d.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let w = k + 1;
        let mut l = vec![0.0; n * w];
        for r in 0..n {
            for c in r.saturating_sub(k)..=r {
                let mut s = a.get(r, c) * scale[r] * scale[c];
                if r == c {
                    s += shift;
                }
                let lo = r.saturating_sub(k).max(c.saturating_sub(k));
                for m in lo..c {
                    s -= l[r * w + (r - m)] * l[c * w + (c - m)];
                }
                if r == c {
                    if !(s > 0.0) {
                        return Err(Error::Singular {
                            condition: f64::INFINITY,
                            detail: format!("normal matrix not positive definite at {r}"),
                        });
                    }
                    l[r * w] = s.sqrt();
                } else {
                    l[r * w + (r - c)] = s / l[c * w];
                }
            }
        }
        Ok(Self { n, k, l, scale })
    }

    /// Solves `(A + shift D^-2) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, k, w) = (self.n, self.k, self.k + 1);
        let mut y: Vec<f64> = b.iter().zip(&self.scale).map(|(b, s)| b * s).collect();
        for r in 0..n {
            let mut s = y[r];
            for m in r.saturating_sub(k)..r {
                s -= self.l[r * w + (r - m)] * y[m];
            }
            y[r] = s / self.l[r * w];
        }
        for r in (0..n).rev() {
            y[r] /= self.l[r * w];
            let yr = y[r];
            for m in r.saturating_sub(k)..r {
                y[m] -= self.l[r * w + (r - m)] * yr;
            }
        }
        y.iter().zip(&self.scale).map(|(y, s)| y * s).collect()
    }
}
