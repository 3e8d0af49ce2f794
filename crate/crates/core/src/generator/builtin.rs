//! Generators with closed forms.

use nalgebra::{DMatrix, DVector};

use super::{Generator, Jet2};
use crate::geom::dot;

/// `g(x, y, z) = x·y − z`.
#[derive(Debug, Clone)]
pub struct Classical {
    n: usize,
}

impl Classical {
    pub fn new(n: usize) -> Self {
        Classical { n }
    }
}

impl Generator for Classical {
    fn dim(&self) -> usize {
        self.n
    }

    fn name(&self) -> String {
        "classical".into()
    }

    fn value(&self, x: &[f64], y: &[f64], z: f64) -> f64 {
        dot(x, y) - z
    }

    fn jet(&self, x: &[f64], y: &[f64], z: f64) -> Option<Jet2> {
        let n = self.n;
        Some(Jet2 {
            g: self.value(x, y, z),
            gx: DVector::from_column_slice(y),
            gy: DVector::from_column_slice(x),
            gz: -1.0,
            gxx: DMatrix::zeros(n, n),
            gxy: DMatrix::identity(n, n),
            gxz: DVector::zeros(n),
            gyy: DMatrix::zeros(n, n),
            gyz: DVector::zeros(n),
            gzz: 0.0,
        })
    }

    fn g_star(&self, x: &[f64], y: &[f64], u: f64) -> Option<f64> {
        Some(dot(x, y) - u)
    }

    fn solve_yz(&self, x: &[f64], u: f64, p: &[f64]) -> Option<(Vec<f64>, f64)> {
        Some((p.to_vec(), dot(x, p) - u))
    }

    fn dual_affine(&self, x: &[f64], u: f64) -> Option<(Vec<f64>, f64)> {
        Some((x.to_vec(), -u))
    }
}

/// `g(x, y, z) = −|x − y|²/2 − z`, so `g_x = y − x` and `g_xx = −I`.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    n: usize,
}

impl QuadraticCost {
    pub fn new(n: usize) -> Self {
        QuadraticCost { n }
    }
}

fn half_sq_dist(x: &[f64], y: &[f64]) -> f64 {
    0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

impl Generator for QuadraticCost {
    fn dim(&self) -> usize {
        self.n
    }

    fn name(&self) -> String {
        "quadratic".into()
    }

    fn value(&self, x: &[f64], y: &[f64], z: f64) -> f64 {
        -half_sq_dist(x, y) - z
    }

    fn jet(&self, x: &[f64], y: &[f64], z: f64) -> Option<Jet2> {
        let n = self.n;
        let d = DVector::from_fn(n, |i, _| y[i] - x[i]);
        Some(Jet2 {
            g: self.value(x, y, z),
            gx: d.clone(),
            gy: -d,
            gz: -1.0,
            gxx: -DMatrix::identity(n, n),
            gxy: DMatrix::identity(n, n),
            gxz: DVector::zeros(n),
            gyy: -DMatrix::identity(n, n),
            gyz: DVector::zeros(n),
            gzz: 0.0,
        })
    }

    fn g_star(&self, x: &[f64], y: &[f64], u: f64) -> Option<f64> {
        Some(-half_sq_dist(x, y) - u)
    }

    fn solve_yz(&self, x: &[f64], u: f64, p: &[f64]) -> Option<(Vec<f64>, f64)> {
        let y: Vec<f64> = x.iter().zip(p).map(|(a, b)| a + b).collect();
        Some((y, -0.5 * dot(p, p) - u))
    }

    fn dual_affine(&self, x: &[f64], u: f64) -> Option<(Vec<f64>, f64)> {
        // −|x−y|²/2 − u = x·y − |x|²/2 − u − |y|²/2
        Some((x.to_vec(), -0.5 * dot(x, x) - u))
    }
}

/// `g(x, y, z) = x·y − z + z·xᵀ M y`.
///
/// Linear in `x`, so `A ≡ 0`; the z-dependence of `E` is what makes it
/// differ from the classical case.
#[derive(Debug, Clone)]
pub struct Perturbed {
    m: DMatrix<f64>,
}

impl Perturbed {
    pub fn new(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "perturbation matrix must be square");
        Perturbed { m }
    }

    /// `M = a·I`.
    pub fn scalar(n: usize, a: f64) -> Self {
        Perturbed { m: DMatrix::identity(n, n) * a }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.m.nrows();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += x[i] * self.m[(i, j)] * y[j];
            }
        }
        s
    }
}

impl Generator for Perturbed {
    fn dim(&self) -> usize {
        self.m.nrows()
    }

    fn name(&self) -> String {
        "perturbed".into()
    }

    fn value(&self, x: &[f64], y: &[f64], z: f64) -> f64 {
        dot(x, y) - z + z * self.bilinear(x, y)
    }

    fn jet(&self, x: &[f64], y: &[f64], z: f64) -> Option<Jet2> {
        let n = self.dim();
        let xv = DVector::from_column_slice(x);
        let yv = DVector::from_column_slice(y);
        let my = &self.m * &yv;
        let mtx = self.m.transpose() * &xv;
        Some(Jet2 {
            g: self.value(x, y, z),
            gx: &yv + &my * z,
            gy: &xv + &mtx * z,
            gz: -1.0 + xv.dot(&my),
            gxx: DMatrix::zeros(n, n),
            gxy: DMatrix::identity(n, n) + &self.m * z,
            gxz: my,
            gyy: DMatrix::zeros(n, n),
            gyz: mtx,
            gzz: 0.0,
        })
    }

    fn g_star(&self, x: &[f64], y: &[f64], u: f64) -> Option<f64> {
        let c = self.bilinear(x, y) - 1.0;
        if c >= 0.0 {
            return Some(f64::NAN);
        }
        Some((u - dot(x, y)) / c)
    }

    fn initial_yz(&self, x: &[f64], u: f64, p: &[f64]) -> Option<(Vec<f64>, f64)> {
        Some((p.to_vec(), dot(x, p) - u))
    }
}
