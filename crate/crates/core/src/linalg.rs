//! Small dense linear solves for the Newton and DC steps.

use crate::scalar::Scalar;

/// Dense row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.n + c] = v;
    }

    #[inline]
    pub fn add_to(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.n + c] += v;
    }

    /// Solves `A x = rhs` by LU with partial pivoting. Returns `None` when a
    /// pivot falls below `n * eps * max|A|`.
    pub fn solve(&self, rhs: &[T]) -> Option<Vec<T>> {
        let n = self.n;
        assert_eq!(rhs.len(), n, "rhs length must match matrix dimension");
        let mut a = self.data.clone();
        let mut x = rhs.to_vec();
        let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if n == 0 {
            return Some(x);
        }
        let threshold = scale * T::epsilon() * T::lit(n as f64);
        if scale == T::zero() {
            return None;
        }

        for col in 0..n {
            let (pivot_row, pivot_abs) = (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold((col, T::neg_infinity()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot_abs > threshold) {
                return None;
            }
            if pivot_row != col {
                for c in 0..n {
                    a.swap(col * n + c, pivot_row * n + c);
                }
                x.swap(col, pivot_row);
            }
            let pivot = a[col * n + col];
            for r in (col + 1)..n {
                let factor = a[r * n + col] / pivot;
                if factor == T::zero() {
                    continue;
                }
                a[r * n + col] = T::zero();
                for c in (col + 1)..n {
                    let upd = factor * a[col * n + c];
                    a[r * n + c] -= upd;
                }
                let upd = factor * x[col];
                x[r] -= upd;
            }
        }

        for row in (0..n).rev() {
            let mut acc = x[row];
            for c in (row + 1)..n {
                acc -= a[row * n + c] * x[c];
            }
            x[row] = acc / a[row * n + row];
        }
        Some(x)
    }
}
