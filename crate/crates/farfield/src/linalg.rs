//! Narrowband Hermitian matrix estimation and solves.
//!
//! Beamforming and dereverberation all reduce to per-frequency work on small
//! Hermitian matrices: masked PSD estimates, diagonal variance flooring and
//! linear solves against those floored matrices. Keeping that machinery in
//! one place means every filter inherits the same numerical safeguards.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::mask::ComplexMask;
use crate::stft::Spectrogram;
use crate::C64;

/// Floor for the mask-power denominator in [`masked_psd`].
pub const MASK_DEN_FLOOR: f64 = 1e-10;

/// Relative pivot threshold below which a factorization counts as failed.
const PIVOT_TOL: f64 = 1e-14;

/// Fixed number of iterative-refinement passes after each solve.
const REFINE_STEPS: usize = 2;

/// One Hermitian matrix per frequency bin.
#[derive(Debug, Clone)]
pub struct NarrowbandMatrixSet {
    pub dim: usize,
    pub mats: Vec<Array2<C64>>,
    /// Bins whose estimate fell back to a floor (e.g. an all-zero mask).
    pub degenerate: Vec<bool>,
}

impl NarrowbandMatrixSet {
    pub fn zeros(bins: usize, dim: usize) -> Self {
        Self {
            dim,
            mats: vec![Array2::zeros((dim, dim)); bins],
            degenerate: vec![false; bins],
        }
    }

    pub fn bins(&self) -> usize {
        self.mats.len()
    }
}

/// Complex trace.
pub fn trace(m: &Array2<C64>) -> C64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// Masked spatial PSD per frequency:
/// Phi(f) = sum_t (M y)(M y)^H / sum_t M M^*.
///
/// A bin whose mask power underruns [`MASK_DEN_FLOOR`] is replaced by
/// `MASK_DEN_FLOOR * I` and flagged degenerate.
pub fn masked_psd(spec: &Spectrogram, mask: &ComplexMask) -> Result<NarrowbandMatrixSet> {
    let (r, t, f) = (spec.channels(), spec.frames(), spec.bins());
    if mask.frames() != t || mask.bins() != f {
        return Err(Error::shape(format!(
            "mask is {}x{} but spectrogram has {t} frames x {f} bins",
            mask.frames(),
            mask.bins()
        )));
    }
    let mut set = NarrowbandMatrixSet::zeros(f, r);
    let mut snapshot: Vec<C64> = vec![C64::new(0.0, 0.0); r];
    for fi in 0..f {
        let mat = &mut set.mats[fi];
        let mut den = 0.0f64;
        for ti in 0..t {
            let m = mask.values[(ti, fi)];
            let mp = m.norm_sqr();
            if mp == 0.0 {
                continue;
            }
            den += mp;
            for (ch, s) in snapshot.iter_mut().enumerate() {
                *s = m * spec.values[(ch, ti, fi)];
            }
            for i in 0..r {
                for j in 0..r {
                    mat[(i, j)] += snapshot[i] * snapshot[j].conj();
                }
            }
        }
        if den < MASK_DEN_FLOOR {
            for i in 0..r {
                for j in 0..r {
                    mat[(i, j)] = if i == j {
                        C64::new(MASK_DEN_FLOOR, 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    };
                }
            }
            set.degenerate[fi] = true;
        } else {
            mat.mapv_inplace(|v| v / den);
        }
    }
    Ok(set)
}

/// Diagonal variance flooring: Phi' = Phi + eps * tr(Phi) * I.
pub fn floor_matrix(m: &Array2<C64>, eps: f64) -> Array2<C64> {
    let mut out = m.clone();
    let shift = eps * trace(m).re;
    for i in 0..out.nrows().min(out.ncols()) {
        out[(i, i)] += C64::new(shift, 0.0);
    }
    out
}

/// Solve m * X = rhs for Hermitian m.
///
/// The input is symmetrized as (m + m^H)/2, factored as P^T L D L^H P with
/// diagonal pivoting, and the solution polished with two fixed
/// iterative-refinement passes, which keeps residuals near machine precision
/// even when flooring leaves the matrix with a condition number around 1e9.
pub fn solve_hermitian(m: &Array2<C64>, rhs: &Array2<C64>) -> Result<Array2<C64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::shape("matrix must be square"));
    }
    if rhs.nrows() != n {
        return Err(Error::shape(format!(
            "rhs has {} rows, matrix is {n}x{n}",
            rhs.nrows()
        )));
    }

    let mut sym = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            sym[(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)].conj());
        }
    }

    let fact = LdlFactors::compute(&sym)?;
    let mut x = fact.solve(rhs);
    for _ in 0..REFINE_STEPS {
        let residual = rhs - &sym.dot(&x);
        x += &fact.solve(&residual);
    }
    Ok(x)
}

/// P^T L D L^H P factorization of a Hermitian positive-definite matrix with
/// diagonal pivoting.
struct LdlFactors {
    lower: Array2<C64>,
    diag: Array1<f64>,
    perm: Vec<usize>,
}

impl LdlFactors {
    fn compute(sym: &Array2<C64>) -> Result<LdlFactors> {
        let n = sym.nrows();
        let mut a = sym.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut diag = Array1::zeros(n);
        let max_diag0 = (0..n).map(|i| a[(i, i)].re).fold(0.0f64, f64::max);
        if !(max_diag0 > 0.0) || !max_diag0.is_finite() {
            return Err(Error::Factorization(
                "matrix has no positive diagonal mass".into(),
            ));
        }

        for k in 0..n {
            // Largest remaining diagonal entry becomes the pivot.
            let mut p = k;
            for i in k + 1..n {
                if a[(i, i)].re > a[(p, p)].re {
                    p = i;
                }
            }
            if p != k {
                perm.swap(k, p);
                swap_symmetric(&mut a, k, p);
            }
            let d = a[(k, k)].re;
            if !(d > PIVOT_TOL * max_diag0) || !d.is_finite() {
                return Err(Error::Factorization(format!(
                    "pivot {d:.3e} at step {k} (diag max {max_diag0:.3e})"
                )));
            }
            diag[k] = d;
            for i in k + 1..n {
                a[(i, k)] /= d;
            }
            for i in k + 1..n {
                let lik = a[(i, k)];
                for j in k + 1..=i {
                    let v = lik * d * a[(j, k)].conj();
                    a[(i, j)] -= v;
                }
            }
            // Keep the upper triangle Hermitian-consistent for the residual
            // math done by callers of `solve`.
            for i in k + 1..n {
                for j in i + 1..n {
                    a[(i, j)] = a[(j, i)].conj();
                }
            }
        }

        let mut lower = Array2::zeros((n, n));
        for i in 0..n {
            lower[(i, i)] = C64::new(1.0, 0.0);
            for j in 0..i {
                lower[(i, j)] = a[(i, j)];
            }
        }
        Ok(LdlFactors { lower, diag, perm })
    }

    /// Solve (P^T L D L^H P) X = B.
    fn solve(&self, b: &Array2<C64>) -> Array2<C64> {
        let n = self.diag.len();
        let k = b.ncols();
        let mut x = Array2::zeros((n, k));
        for col in 0..k {
            // Apply the permutation, then forward/diagonal/backward sweeps.
            let mut y: Vec<C64> = (0..n).map(|i| b[(self.perm[i], col)]).collect();
            for i in 0..n {
                for j in 0..i {
                    let v = self.lower[(i, j)] * y[j];
                    y[i] -= v;
                }
            }
            for i in 0..n {
                y[i] /= self.diag[i];
            }
            for i in (0..n).rev() {
                for j in i + 1..n {
                    let v = self.lower[(j, i)].conj() * y[j];
                    y[i] -= v;
                }
            }
            for i in 0..n {
                x[(self.perm[i], col)] = y[i];
            }
        }
        x
    }
}

fn swap_symmetric(a: &mut Array2<C64>, k: usize, p: usize) {
    let n = a.nrows();
    for j in 0..n {
        let t = a[(k, j)];
        a[(k, j)] = a[(p, j)];
        a[(p, j)] = t;
    }
    for i in 0..n {
        let t = a[(i, k)];
        a[(i, k)] = a[(i, p)];
        a[(i, p)] = t;
    }
}
