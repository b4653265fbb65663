//! Small dense linear algebra: symmetric Jacobi diagonalization and the
//! matrix exponential.

use rayon::prelude::*;

/// Dense square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Matrix {
            n,
            data: rows.concat(),
        }
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "matrix must be square");
        Matrix { n, data }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let mut data = vec![0.0; n * n];
        data.par_chunks_mut(n.max(1))
            .enumerate()
            .for_each(|(i, row)| {
                for (j, x) in row.iter_mut().enumerate() {
                    *x = f(i, j);
                }
            });
        Matrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.n + j] = x;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn norm1(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = vec![0.0; n * n];
        out.par_chunks_mut(n.max(1))
            .enumerate()
            .for_each(|(i, row)| {
                for k in 0..n {
                    let a = self.data[i * n + k];
                    if a == 0.0 {
                        continue;
                    }
                    for (x, b) in row.iter_mut().zip(other.row(k)) {
                        *x += a * b;
                    }
                }
            });
        Matrix { n, data: out }
    }
}

/// Eigenvalues and column eigenvectors (`vectors[k]` belongs to `values[k]`).
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi rotations on a symmetric matrix.
///
/// Sweeps continue until every off-diagonal entry is negligible against its two
/// diagonal entries, which is past the usual `off(A) < 1e-12‖A‖` stopping point.
pub fn jacobi_eigen(m: &Matrix) -> Eigen {
    let n = m.n;
    let mut a = m.data.clone();
    let mut v = Matrix::identity(n).data;
    for sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q].abs())
            .sum();
        if off == 0.0 {
            break;
        }
        let threshold = if sweep < 3 {
            0.2 * off / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let g = 100.0 * apq.abs();
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                if apq.abs() <= threshold || apq == 0.0 {
                    continue;
                }
                let h = aqq - app;
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let hh = t * apq;
                a[p * n + p] -= hh;
                a[q * n + q] += hh;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let (g, h) = (a[r * n + p], a[r * n + q]);
                    let rp = g - s * (h + g * tau);
                    let rq = h + s * (g - h * tau);
                    a[r * n + p] = rp;
                    a[p * n + r] = rp;
                    a[r * n + q] = rq;
                    a[q * n + r] = rq;
                }
                for r in 0..n {
                    let (g, h) = (v[r * n + p], v[r * n + q]);
                    v[r * n + p] = g - s * (h + g * tau);
                    v[r * n + q] = h + s * (g - h * tau);
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    let vectors = (0..n)
        .map(|k| (0..n).map(|r| v[r * n + k]).collect())
        .collect();
    Eigen { values, vectors }
}

/// `e^{A}` by scaling and squaring with the degree-13 Padé approximant
/// (Higham's θ₁₃ = 5.37 scaling).
///
/// On stiff generators the rounding made before squaring is amplified about
/// `2^k`-fold over `k` squarings, so the wide Padé range (fewer squarings than
/// a Taylor series on a small norm) is what keeps slow modes accurate.
pub fn expm(a: &Matrix) -> Matrix {
    const THETA13: f64 = 5.371920351148152;
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.n;
    let norm = a.norm1();
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let mut x = a.clone();
    x.scale(0.5f64.powi(squarings));
    let a2 = x.matmul(&x);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let comb = |c: [f64; 4], with_identity: bool| -> Matrix {
        let mut m = Matrix::zeros(n);
        for (i, out) in m.data.iter_mut().enumerate() {
            *out = c[0] * a6.data[i] + c[1] * a4.data[i] + c[2] * a2.data[i];
        }
        if with_identity {
            for i in 0..n {
                m.data[i * n + i] += c[3];
            }
        }
        m
    };
    let add = |p: &Matrix, q: &Matrix| -> Matrix {
        Matrix {
            n,
            data: p.data.iter().zip(&q.data).map(|(x, y)| x + y).collect(),
        }
    };
    let u_inner = add(
        &a6.matmul(&comb([B[13], B[11], B[9], 0.0], false)),
        &comb([B[7], B[5], B[3], B[1]], true),
    );
    let u = x.matmul(&u_inner);
    let v = add(
        &a6.matmul(&comb([B[12], B[10], B[8], 0.0], false)),
        &comb([B[6], B[4], B[2], B[0]], true),
    );
    let lhs = Matrix {
        n,
        data: v.data.iter().zip(&u.data).map(|(v, u)| v - u).collect(),
    };
    let rhs = add(&v, &u);
    let mut r = solve(&lhs, &rhs);
    for _ in 0..squarings {
        r = r.matmul(&r);
    }
    r
}

/// `X` with `A X = B`, by LU with partial pivoting.
pub fn solve(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.n;
    let mut lu = a.data.clone();
    let mut x = b.data.clone();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| lu[i * n + k].abs().total_cmp(&lu[j * n + k].abs()))
            .expect("non-empty range");
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
                x.swap(k * n + j, p * n + j);
            }
        }
        let pivot = lu[k * n + k];
        for i in k + 1..n {
            let f = lu[i * n + k] / pivot;
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                lu[i * n + j] -= f * lu[k * n + j];
            }
            for j in 0..n {
                x[i * n + j] -= f * x[k * n + j];
            }
        }
    }
    for k in (0..n).rev() {
        let pivot = lu[k * n + k];
        for j in 0..n {
            let mut acc = x[k * n + j];
            for i in k + 1..n {
                acc -= lu[k * n + i] * x[i * n + j];
            }
            x[k * n + j] = acc / pivot;
        }
    }
    Matrix { n, data: x }
}

/// Pairwise (cascade) summation; the result does not depend on thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
