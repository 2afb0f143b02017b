use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    /// `f(w) = 1/2 (w - w*)' H (w - w*)` over a finite dataset of per-sample
    /// gradient offsets that average to zero.
    Quadratic,
    /// Logistic regression on synthetic features with soft labels
    /// `y_i = s(x_i . w*)`, so `w*` is the exact minimizer.
    Logistic,
    /// Same objective as `Quadratic` but with an infinite sample stream:
    /// the mini-batch gradient is `grad f(w) + xi`, `xi ~ N(0, phi^2 / M)`
    /// per coordinate.
    NoisyQuadratic,
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(ProblemKind::Quadratic),
            "logistic" => Ok(ProblemKind::Logistic),
            "noisy-quadratic" => Ok(ProblemKind::NoisyQuadratic),
            other => Err(Error::input(format!(
                "unknown problem kind '{other}' (expected quadratic, logistic or noisy-quadratic)"
            ))),
        }
    }
}

/// Diagonal Hessian layout for the quadratic kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spectrum {
    /// Every coordinate has curvature `L`.
    Isotropic,
    /// Curvatures geometrically spaced from `L / condition` up to `L`.
    ///
    /// With isotropic starting points this gives the sublinear `1/k`
    /// residual decay of gradient descent over the spectral range, instead
    /// of the linear rate of a well-conditioned quadratic.
    LogSpaced { condition: f64 },
}

#[derive(Debug, Clone)]
enum Data<T> {
    Stream,
    /// Row-major `n x d` gradient offsets, column means exactly zero.
    Offsets(Vec<T>),
    Logistic {
        features: Vec<T>,
        labels: Vec<T>,
    },
}

/// A convex test objective with known minimizer and minimum value.
#[derive(Debug, Clone)]
pub struct Problem<T> {
    kind: ProblemKind,
    dimension: usize,
    optimum: Vec<T>,
    curvature: T,
    noise_scale: T,
    dataset_size: Option<usize>,
    hessian: Vec<T>,
    optimal_value: T,
    data: Data<T>,
}

fn normal<T: Scalar>(rng: &mut ChaCha8Rng) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

fn diag_spectrum<T: Scalar>(dimension: usize, curvature: T, spectrum: Spectrum) -> Result<Vec<T>> {
    match spectrum {
        Spectrum::Isotropic => Ok(vec![curvature; dimension]),
        Spectrum::LogSpaced { condition } => {
            if !(condition >= 1.0 && condition.is_finite()) {
                return Err(Error::input(format!("spectrum condition number must be >= 1, got {condition}")));
            }
            if dimension == 1 {
                return Ok(vec![curvature]);
            }
            let last = (dimension - 1) as f64;
            Ok((0..dimension)
                .map(|i| {
                    // largest curvature last, exactly L
                    let exponent = (last - i as f64) / last;
                    curvature / T::lit(condition.powf(exponent))
                })
                .collect())
        }
    }
}

fn check_common<T: Scalar>(dimension: usize, curvature: T, noise_scale: T) -> Result<()> {
    if dimension == 0 {
        return Err(Error::input("dimension must be positive"));
    }
    if !(curvature > T::zero() && curvature.is_finite()) {
        return Err(Error::input(format!("curvature must be positive, got {curvature}")));
    }
    if !(noise_scale >= T::zero() && noise_scale.is_finite()) {
        return Err(Error::input(format!("noise scale must be nonnegative, got {noise_scale}")));
    }
    Ok(())
}

impl<T: Scalar> Problem<T> {
    /// Quadratic with an infinite Gaussian sample stream.
    pub fn noisy_quadratic(dimension: usize, curvature: T, noise_scale: T) -> Result<Self> {
        check_common(dimension, curvature, noise_scale)?;
        Ok(Problem {
            kind: ProblemKind::NoisyQuadratic,
            dimension,
            optimum: vec![T::zero(); dimension],
            curvature,
            noise_scale,
            dataset_size: None,
            hessian: vec![curvature; dimension],
            optimal_value: T::zero(),
            data: Data::Stream,
        })
    }

    /// Finite-dataset quadratic. Per-sample gradients are
    /// `H (w - w*) + z_i` where the offsets `z_i` are centered and rescaled so
    /// every coordinate has population standard deviation `noise_scale`.
    pub fn quadratic(
        dimension: usize,
        curvature: T,
        noise_scale: T,
        dataset_size: usize,
        data_seed: u64,
    ) -> Result<Self> {
        check_common(dimension, curvature, noise_scale)?;
        if dataset_size == 0 {
            return Err(Error::input("dataset size must be positive"));
        }
        let n = dataset_size;
        let mut offsets = vec![T::zero(); n * dimension];
        if noise_scale > T::zero() {
            if n < 2 {
                return Err(Error::input("a noisy finite dataset needs at least 2 samples"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
            for v in offsets.iter_mut() {
                *v = normal(&mut rng);
            }
            let nt = T::count(n as u64);
            for j in 0..dimension {
                let col_mean = (0..n).map(|i| offsets[i * dimension + j]).sum::<T>() / nt;
                for i in 0..n {
                    offsets[i * dimension + j] = offsets[i * dimension + j] - col_mean;
                }
                let var = (0..n).map(|i| offsets[i * dimension + j].powi(2)).sum::<T>() / nt;
                let scale = if var > T::zero() { noise_scale / var.sqrt() } else { T::zero() };
                for i in 0..n {
                    offsets[i * dimension + j] = offsets[i * dimension + j] * scale;
                }
                // re-center after scaling so the column sums are zero to rounding
                let col_mean = (0..n).map(|i| offsets[i * dimension + j]).sum::<T>() / nt;
                for i in 0..n {
                    offsets[i * dimension + j] = offsets[i * dimension + j] - col_mean;
                }
            }
        }
        Ok(Problem {
            kind: ProblemKind::Quadratic,
            dimension,
            optimum: vec![T::zero(); dimension],
            curvature,
            noise_scale,
            dataset_size: Some(n),
            hessian: vec![curvature; dimension],
            optimal_value: T::zero(),
            data: Data::Offsets(offsets),
        })
    }

    /// Logistic regression with `dataset_size` Gaussian feature vectors and a
    /// unit-norm random `w*`. The curvature is `lambda_max(X'X / n) / 4`.
    pub fn logistic(dimension: usize, dataset_size: usize, data_seed: u64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        if dataset_size == 0 {
            return Err(Error::input("dataset size must be positive"));
        }
        let (d, n) = (dimension, dataset_size);
        let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
        let mut optimum: Vec<T> = (0..d).map(|_| normal(&mut rng)).collect();
        let norm = optimum.iter().map(|&v| v * v).sum::<T>().sqrt();
        for v in optimum.iter_mut() {
            *v = *v / norm;
        }
        let features: Vec<T> = (0..n * d).map(|_| normal(&mut rng)).collect();
        let labels: Vec<T> = (0..n).map(|i| sigmoid(dot(&features[i * d..(i + 1) * d], &optimum))).collect();
        let optimal_value = (0..n)
            .map(|i| {
                let z = dot(&features[i * d..(i + 1) * d], &optimum);
                softplus(z) - labels[i] * z
            })
            .sum::<T>()
            / T::count(n as u64);
        let curvature = T::lit(top_eigenvalue_gram(&features, n, d) / 4.0);
        Ok(Problem {
            kind: ProblemKind::Logistic,
            dimension,
            optimum,
            curvature,
            noise_scale: T::zero(),
            dataset_size: Some(n),
            hessian: Vec::new(),
            optimal_value,
            data: Data::Logistic { features, labels },
        })
    }

    /// Replace the diagonal Hessian of a quadratic kind. `curvature` stays the
    /// largest diagonal entry.
    pub fn with_spectrum(mut self, spectrum: Spectrum) -> Result<Self> {
        if self.kind == ProblemKind::Logistic {
            return Err(Error::input("spectrum applies to quadratic kinds only"));
        }
        self.hessian = diag_spectrum(self.dimension, self.curvature, spectrum)?;
        Ok(self)
    }

    /// Move the minimizer of a quadratic kind.
    pub fn with_optimum(mut self, optimum: Vec<T>) -> Result<Self> {
        if self.kind == ProblemKind::Logistic {
            return Err(Error::input("the logistic minimizer is fixed by its dataset"));
        }
        if optimum.len() != self.dimension {
            return Err(Error::input(format!("optimum has length {}, expected {}", optimum.len(), self.dimension)));
        }
        self.optimum = optimum;
        Ok(self)
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn optimum(&self) -> &[T] {
        &self.optimum
    }

    pub fn curvature(&self) -> T {
        self.curvature
    }

    pub fn noise_scale(&self) -> T {
        self.noise_scale
    }

    pub fn dataset_size(&self) -> Option<usize> {
        self.dataset_size
    }

    pub fn optimal_value(&self) -> T {
        self.optimal_value
    }

    /// Diagonal Hessian (quadratic kinds; empty for logistic).
    pub fn hessian_diag(&self) -> &[T] {
        &self.hessian
    }

    pub fn loss(&self, w: &[T]) -> T {
        match &self.data {
            Data::Logistic { features, labels } => {
                let d = self.dimension;
                let n = labels.len();
                (0..n)
                    .map(|i| {
                        let z = dot(&features[i * d..(i + 1) * d], w);
                        softplus(z) - labels[i] * z
                    })
                    .sum::<T>()
                    / T::count(n as u64)
            }
            _ => self.optimal_value + self.quadratic_residual(w),
        }
    }

    /// `f(w) - f(w*)`.
    pub fn residual(&self, w: &[T]) -> T {
        match &self.data {
            Data::Logistic { .. } => self.loss(w) - self.optimal_value,
            _ => self.quadratic_residual(w),
        }
    }

    fn quadratic_residual(&self, w: &[T]) -> T {
        w.iter()
            .zip(&self.optimum)
            .zip(&self.hessian)
            .map(|((&wi, &oi), &h)| {
                let e = wi - oi;
                h * e * e
            })
            .sum::<T>()
            * T::half()
    }

    /// Exact full gradient.
    pub fn gradient(&self, w: &[T], out: &mut [T]) {
        match &self.data {
            Data::Logistic { features, labels } => {
                let d = self.dimension;
                let n = labels.len();
                out.iter_mut().for_each(|g| *g = T::zero());
                for i in 0..n {
                    let x = &features[i * d..(i + 1) * d];
                    let r = sigmoid(dot(x, w)) - labels[i];
                    for (g, &xj) in out.iter_mut().zip(x) {
                        *g = *g + r * xj;
                    }
                }
                let nt = T::count(n as u64);
                out.iter_mut().for_each(|g| *g = *g / nt);
            }
            _ => {
                for (((g, &wi), &oi), &h) in out.iter_mut().zip(w).zip(&self.optimum).zip(&self.hessian) {
                    *g = h * (wi - oi);
                }
            }
        }
    }

    /// Mini-batch stochastic gradient at `w` for batch size `minibatch`.
    ///
    /// Finite datasets average `minibatch` per-sample gradients drawn without
    /// replacement; the stream kind adds `N(0, phi^2 / M)` noise per coordinate.
    pub fn stochastic_gradient(&self, w: &[T], minibatch: usize, rng: &mut ChaCha8Rng, out: &mut [T]) {
        let d = self.dimension;
        match &self.data {
            Data::Stream => {
                self.gradient(w, out);
                if self.noise_scale > T::zero() {
                    let scale = self.noise_scale / T::count(minibatch as u64).sqrt();
                    for g in out.iter_mut() {
                        *g = *g + scale * normal::<T>(rng);
                    }
                }
            }
            Data::Offsets(offsets) => {
                self.gradient(w, out);
                let n = offsets.len() / d;
                if self.noise_scale > T::zero() && minibatch < n {
                    let mt = T::count(minibatch as u64);
                    for i in index::sample(rng, n, minibatch) {
                        for (g, &z) in out.iter_mut().zip(&offsets[i * d..(i + 1) * d]) {
                            *g = *g + z / mt;
                        }
                    }
                }
            }
            Data::Logistic { features, labels } => {
                let n = labels.len();
                if minibatch >= n {
                    self.gradient(w, out);
                    return;
                }
                out.iter_mut().for_each(|g| *g = T::zero());
                for i in index::sample(rng, n, minibatch) {
                    let x = &features[i * d..(i + 1) * d];
                    let r = sigmoid(dot(x, w)) - labels[i];
                    for (g, &xj) in out.iter_mut().zip(x) {
                        *g = *g + r * xj;
                    }
                }
                let mt = T::count(minibatch as u64);
                out.iter_mut().for_each(|g| *g = *g / mt);
            }
        }
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Scalar>(z: T) -> T {
    // log(1 + e^z) without overflow
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

/// Largest eigenvalue of `X'X / n` by power iteration, in f64.
fn top_eigenvalue_gram<T: Scalar>(features: &[T], n: usize, d: usize) -> f64 {
    let mut gram = vec![0.0f64; d * d];
    for i in 0..n {
        let x = &features[i * d..(i + 1) * d];
        for a in 0..d {
            for b in 0..d {
                gram[a * d + b] += x[a].as_f64() * x[b].as_f64();
            }
        }
    }
    gram.iter_mut().for_each(|g| *g /= n as f64);
    let mut v = vec![1.0f64; d];
    let mut value = 0.0;
    for _ in 0..2000 {
        let mut next = vec![0.0f64; d];
        for a in 0..d {
            next[a] = (0..d).map(|b| gram[a * d + b] * v[b]).sum();
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        next.iter_mut().for_each(|x| *x /= norm);
        value = norm;
        v = next;
    }
    // power iteration approaches from below; pad by a hair to keep L an upper bound
    value * (1.0 + 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lipschitz_ok(p: &Problem<f64>, seed: u64) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = p.dimension();
        let (mut gx, mut gy) = (vec![0.0; d], vec![0.0; d]);
        (0..200).all(|_| {
            let x: Vec<f64> = (0..d).map(|_| 3.0 * normal::<f64>(&mut rng)).collect();
            let y: Vec<f64> = (0..d).map(|_| 3.0 * normal::<f64>(&mut rng)).collect();
            p.gradient(&x, &mut gx);
            p.gradient(&y, &mut gy);
            let dg = gx.iter().zip(&gy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let dw = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            dg <= p.curvature() * dw * (1.0 + 1e-9)
        })
    }

    #[test]
    fn gradients_are_lipschitz_with_stated_curvature() {
        let q = Problem::<f64>::quadratic(5, 2.0, 0.3, 50, 1).unwrap();
        let nq = Problem::<f64>::noisy_quadratic(8, 1.5, 0.1)
            .unwrap()
            .with_spectrum(Spectrum::LogSpaced { condition: 100.0 })
            .unwrap();
        let lg = Problem::<f64>::logistic(6, 300, 4).unwrap();
        assert!(lipschitz_ok(&q, 10));
        assert!(lipschitz_ok(&nq, 11));
        assert!(lipschitz_ok(&lg, 12));
    }

    #[test]
    fn minimizer_has_zero_residual_and_gradient() {
        for p in [Problem::<f64>::quadratic(4, 1.0, 0.5, 32, 3).unwrap(), Problem::<f64>::logistic(4, 200, 3).unwrap()]
        {
            let w = p.optimum().to_vec();
            assert!(p.residual(&w).abs() < 1e-12);
            let mut g = vec![0.0; 4];
            p.gradient(&w, &mut g);
            assert!(g.iter().all(|x| x.abs() < 1e-12), "{g:?}");
        }
    }

    #[test]
    fn logistic_residual_is_positive_away_from_optimum() {
        let p = Problem::<f64>::logistic(3, 100, 9).unwrap();
        let w: Vec<f64> = p.optimum().iter().map(|x| x + 0.3).collect();
        assert!(p.residual(&w) > 0.0);
        assert!(p.optimal_value() > 0.0);
    }

    #[test]
    fn finite_dataset_offsets_are_centered() {
        let p = Problem::<f64>::quadratic(3, 1.0, 0.7, 40, 5).unwrap();
        // full batch equals the exact gradient
        let w = vec![0.4, -0.2, 1.0];
        let mut exact = vec![0.0; 3];
        p.gradient(&w, &mut exact);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut full = vec![0.0; 3];
        p.stochastic_gradient(&w, 40, &mut rng, &mut full);
        for (a, b) in exact.iter().zip(&full) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn log_spaced_spectrum_tops_out_at_curvature() {
        let p = Problem::<f64>::noisy_quadratic(10, 2.0, 0.0)
            .unwrap()
            .with_spectrum(Spectrum::LogSpaced { condition: 1000.0 })
            .unwrap();
        let h = p.hessian_diag();
        assert_eq!(h[9], 2.0);
        assert!((h[0] - 2e-3).abs() < 1e-15);
        assert!(h.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Problem::<f64>::noisy_quadratic(0, 1.0, 0.0).is_err());
        assert!(Problem::<f64>::noisy_quadratic(2, 0.0, 0.0).is_err());
        assert!(Problem::<f64>::noisy_quadratic(2, 1.0, -1.0).is_err());
        assert!(Problem::<f64>::quadratic(2, 1.0, 0.5, 1, 0).is_err());
        assert!("cubic".parse::<ProblemKind>().is_err());
    }
}
