use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::problem::Problem;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_MAX_UPDATES: u64 = 1_000_000;

/// ChaCha stream carrying the initial point.
const INIT_STREAM: u64 = 0;
/// ChaCha stream carrying mini-batch sampling and gradient noise.
const NOISE_STREAM: u64 = 1;

/// How `w0` is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitPolicy<T> {
    /// Uniform on the sphere of this radius around `w*`. Radius 1 gives
    /// `Delta_0 = 0.5` on the unit isotropic quadratic.
    Sphere { radius: T },
    /// Exactly this point, regardless of seed.
    Fixed(Vec<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig<T> {
    pub eta: T,
    pub epsilon: T,
    pub max_updates: u64,
    pub minibatch: usize,
    pub seed: u64,
    pub init: InitPolicy<T>,
}

impl<T: Scalar> SgdConfig<T> {
    pub fn new(eta: T, epsilon: T) -> Self {
        SgdConfig {
            eta,
            epsilon,
            max_updates: DEFAULT_MAX_UPDATES,
            minibatch: 1,
            seed: 0,
            init: InitPolicy::Sphere { radius: T::one() },
        }
    }

    pub fn with_minibatch(mut self, minibatch: usize) -> Self {
        self.minibatch = minibatch;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_updates(mut self, max_updates: u64) -> Self {
        self.max_updates = max_updates;
        self
    }

    pub fn with_init(mut self, init: InitPolicy<T>) -> Self {
        self.init = init;
        self
    }

    fn validate(&self, problem: &Problem<T>) -> Result<()> {
        if !(self.eta > T::zero() && self.eta.is_finite()) {
            return Err(Error::input(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.epsilon > T::zero() && self.epsilon.is_finite()) {
            return Err(Error::input(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_updates == 0 {
            return Err(Error::input("max_updates must be positive"));
        }
        if self.minibatch == 0 {
            return Err(Error::input("mini-batch size must be positive"));
        }
        if let Some(n) = problem.dataset_size() {
            if self.minibatch > n {
                return Err(Error::input(format!("mini-batch size {} exceeds dataset size {n}", self.minibatch)));
            }
        }
        match &self.init {
            InitPolicy::Sphere { radius } if !(*radius >= T::zero() && radius.is_finite()) => {
                Err(Error::input(format!("init radius must be nonnegative, got {radius}")))
            }
            InitPolicy::Fixed(w) if w.len() != problem.dimension() => Err(Error::input(format!(
                "fixed initial point has length {}, expected {}",
                w.len(),
                problem.dimension()
            ))),
            _ => Ok(()),
        }
    }
}

/// Outcome of one SGD run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord<T> {
    pub minibatch: usize,
    pub seed: u64,
    pub epsilon: T,
    /// First update index whose residual is `<= epsilon`; `None` when the
    /// budget ran out first.
    pub n_update: Option<u64>,
    /// Residual at `n_update`, or at `max_updates` when not converged.
    pub final_residual: T,
}

impl<T> RunRecord<T> {
    pub fn converged(&self) -> bool {
        self.n_update.is_some()
    }
}

/// Deterministic SGD iterate stream: `w_{k+1} = w_k - eta * g_k`.
///
/// The initial point is drawn from ChaCha8 stream 0 seeded with the run
/// seed, gradient noise and batch sampling from stream 1. The initial point
/// therefore depends only on the seed, never on the mini-batch size.
pub struct Sgd<'a, T> {
    problem: &'a Problem<T>,
    eta: T,
    minibatch: usize,
    rng: ChaCha8Rng,
    w: Vec<T>,
    grad: Vec<T>,
    step: u64,
}

impl<'a, T: Scalar> Sgd<'a, T> {
    pub fn new(problem: &'a Problem<T>, config: &SgdConfig<T>) -> Result<Self> {
        config.validate(problem)?;
        let d = problem.dimension();
        let w = match &config.init {
            InitPolicy::Fixed(w) => w.clone(),
            InitPolicy::Sphere { radius } => {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(INIT_STREAM);
                let dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
                problem.optimum().iter().zip(&dir).map(|(&o, &u)| o + *radius * T::lit(u / norm)).collect()
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(NOISE_STREAM);
        Ok(Sgd { problem, eta: config.eta, minibatch: config.minibatch, rng, w, grad: vec![T::zero(); d], step: 0 })
    }

    pub fn weights(&self) -> &[T] {
        &self.w
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn residual(&self) -> T {
        self.problem.residual(&self.w)
    }

    /// Apply one update and return the new residual.
    pub fn advance(&mut self) -> T {
        self.problem.stochastic_gradient(&self.w, self.minibatch, &mut self.rng, &mut self.grad);
        for (w, &g) in self.w.iter_mut().zip(&self.grad) {
            *w = *w - self.eta * g;
        }
        self.step += 1;
        self.residual()
    }
}

/// Run mini-batch SGD until the residual first reaches `epsilon`.
///
/// There is no patience window: the first update at or below `epsilon`
/// ends the run. Exhausting `max_updates` is reported in the record, not as
/// an error; a non-finite residual is a [`Error::Divergence`].
pub fn sgd_run<T: Scalar>(problem: &Problem<T>, config: &SgdConfig<T>) -> Result<RunRecord<T>> {
    let mut sgd = Sgd::new(problem, config)?;
    let mut residual = sgd.residual();
    let record = |n_update, final_residual| RunRecord {
        minibatch: config.minibatch,
        seed: config.seed,
        epsilon: config.epsilon,
        n_update,
        final_residual,
    };
    if !residual.is_finite() {
        return Err(Error::Divergence { update: 0 });
    }
    if residual <= config.epsilon {
        return Ok(record(Some(0), residual));
    }
    for k in 1..=config.max_updates {
        residual = sgd.advance();
        if !residual.is_finite() {
            return Err(Error::Divergence { update: k });
        }
        if residual <= config.epsilon {
            return Ok(record(Some(k), residual));
        }
    }
    Ok(record(None, residual))
}

/// Residuals `Delta_0 ..= Delta_steps` of one run, ignoring `epsilon`.
pub fn trajectory<T: Scalar>(problem: &Problem<T>, config: &SgdConfig<T>, steps: u64) -> Result<Vec<T>> {
    let mut sgd = Sgd::new(problem, config)?;
    let mut out = Vec::with_capacity(steps as usize + 1);
    out.push(sgd.residual());
    for k in 1..=steps {
        let r = sgd.advance();
        if !r.is_finite() {
            return Err(Error::Divergence { update: k });
        }
        out.push(r);
    }
    Ok(out)
}
