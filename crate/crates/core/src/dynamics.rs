//! Recursive fixed-point iteration `x ← S·W·x + b + α·act(B·x + c)`,
//! contraction certificates and the generalization-bound calculator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, qr_orthonormal, svd, DenseMatrix};
use crate::network::Activation;
use crate::rng::{gaussian_matrix, gaussian_vec, seeded, substream, uniform_vec};
use crate::scalar::Scalar;
use crate::shaping::make_low_rank_projection;

/// Iterates whose max-abs entry exceeds this count as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct RecursiveSystem<T> {
    /// Composite `S·W` (`d×d`).
    pub linear_part: DenseMatrix<T>,
    /// Constant added to the linear part (the structured bias).
    pub offset: Vec<T>,
    pub correction_b: DenseMatrix<T>,
    pub correction_bias: Vec<T>,
    pub correction_scale: T,
    pub activation: Activation,
}

impl<T: Scalar> RecursiveSystem<T> {
    pub fn new(linear_part: DenseMatrix<T>, correction_b: DenseMatrix<T>, correction_scale: T, activation: Activation) -> Result<Self> {
        let d = linear_part.rows();
        if linear_part.cols() != d || correction_b.shape() != (d, d) {
            return Err(Error::shape("recursive system", linear_part.shape(), correction_b.shape()));
        }
        let sys = Self {
            linear_part,
            offset: vec![T::zero(); d],
            correction_b,
            correction_bias: vec![T::zero(); d],
            correction_scale,
            activation,
        };
        if !sys.is_finite() {
            return Err(Error::Precondition("recursive system has non-finite parameters".into()));
        }
        Ok(sys)
    }

    pub fn with_offset(mut self, offset: Vec<T>) -> Result<Self> {
        if offset.len() != self.dim() {
            return Err(Error::shape("offset", (self.dim(), 1), (offset.len(), 1)));
        }
        self.offset = offset;
        Ok(self)
    }

    pub fn with_correction_bias(mut self, bias: Vec<T>) -> Result<Self> {
        if bias.len() != self.dim() {
            return Err(Error::shape("correction bias", (self.dim(), 1), (bias.len(), 1)));
        }
        self.correction_bias = bias;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.linear_part.rows()
    }

    fn is_finite(&self) -> bool {
        self.linear_part.is_finite()
            && self.correction_b.is_finite()
            && self.correction_scale.is_finite()
            && self.offset.iter().chain(&self.correction_bias).all(|v| v.is_finite())
    }

    /// One application of the update map `F`.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        let lin = self.linear_part.mul_vec(x)?;
        let pre = self.correction_b.mul_vec(x)?;
        Ok(lin
            .iter()
            .zip(&pre)
            .enumerate()
            .map(|(i, (&l, &p))| {
                l + self.offset[i] + self.correction_scale * self.activation.apply(p + self.correction_bias[i])
            })
            .collect())
    }
}

/// `L1 = ‖S·W‖`, `L2 = α·‖B‖·Lip(act)`, `gamma = L1 + L2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionCertificate {
    pub l1: f64,
    pub l2: f64,
    pub gamma: f64,
    pub contractive: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    /// `x(0) … x(T)`.
    pub states: Vec<Vec<T>>,
    /// Contraction metric per step (length `T`).
    pub metric: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn last(&self) -> &[T] {
        self.states.last().expect("trajectory has x(0)")
    }
}

/// Runs `t` updates from `x0`, recording every state.
pub fn iterate<T: Scalar>(sys: &RecursiveSystem<T>, x0: &[T], t: usize) -> Result<Trajectory<T>> {
    if x0.len() != sys.dim() {
        return Err(Error::shape("iterate", (sys.dim(), 1), (x0.len(), 1)));
    }
    if t == 0 {
        return Err(Error::Precondition("iterate needs T ≥ 1".into()));
    }
    let limit = T::of(DIVERGENCE_LIMIT);
    let mut states = Vec::with_capacity(t + 1);
    states.push(x0.to_vec());
    for step in 1..=t {
        let next = sys.apply(&states[step - 1])?;
        if next.iter().any(|v| !v.is_finite() || v.abs() > limit) {
            return Err(Error::Divergence {
                step,
                context: format!("state exceeded {DIVERGENCE_LIMIT:e}"),
            });
        }
        states.push(next);
    }
    let mut traj = Trajectory { states, metric: Vec::new() };
    traj.metric = contraction_metric(&traj);
    Ok(traj)
}

fn op_norm<T: Scalar>(m: &DenseMatrix<T>) -> Result<f64> {
    if m.max_abs() == T::zero() {
        return Ok(0.0);
    }
    Ok(svd(m)?.s.as_slice()[0].as_f64())
}

/// Spectral-norm certificate. `contractive` requires `gamma < 1` by more than
/// rounding (1e-12), so an exactly orthogonal linear part is never certified.
pub fn lipschitz_upper_bound<T: Scalar>(sys: &RecursiveSystem<T>) -> Result<ContractionCertificate> {
    let l1 = op_norm(&sys.linear_part)?;
    let l2 = sys.correction_scale.abs().as_f64() * op_norm(&sys.correction_b)? * sys.activation.lipschitz();
    let gamma = l1 + l2;
    Ok(ContractionCertificate {
        l1,
        l2,
        gamma,
        contractive: gamma < 1.0 - 1e-12,
    })
}

/// Per step, mean absolute change between consecutive states.
pub fn contraction_metric<T: Scalar>(traj: &Trajectory<T>) -> Vec<T> {
    traj.states
        .windows(2)
        .map(|w| {
            let d = T::of(w[0].len().max(1) as f64);
            w[0].iter().zip(&w[1]).map(|(&a, &b)| (b - a).abs()).sum::<T>() / d
        })
        .collect()
}

fn dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

/// Multi-start check that a certified system reaches one fixed point:
/// every pair of terminal states within `tol`, and `‖F(x_T) − x_T‖ ≤ tol`.
pub fn verify_unique_fixed_point<T: Scalar>(sys: &RecursiveSystem<T>, trials: usize, t: usize, tol: f64, seed: u64) -> Result<bool> {
    let cert = lipschitz_upper_bound(sys)?;
    if !cert.contractive {
        return Err(Error::Precondition(format!(
            "system is not certified contractive (gamma = {:.6})",
            cert.gamma
        )));
    }
    if trials == 0 {
        return Err(Error::Precondition("need at least one trial".into()));
    }
    let mut rng = substream(seed, "fixed-point-starts");
    let tol_t = T::of(tol);
    let mut ends: Vec<Vec<T>> = Vec::with_capacity(trials);
    for _ in 0..trials {
        let x0: Vec<T> = gaussian_vec(&mut rng, sys.dim(), 1.0);
        let traj = iterate(sys, &x0, t)?;
        let end = traj.last().to_vec();
        if dist(&sys.apply(&end)?, &end) > tol_t {
            return Ok(false);
        }
        ends.push(end);
    }
    for i in 0..ends.len() {
        for j in i + 1..ends.len() {
            if dist(&ends[i], &ends[j]) > tol_t {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `emp + L·α·B/√n + β/√n + √(ln(1/δ)/(2n))`.
pub fn generalization_bound(emp_risk: f64, l: f64, alpha: f64, b: f64, beta: f64, n: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Precondition(format!("delta must lie in (0, 1], got {delta}")));
    }
    if n == 0 {
        return Err(Error::Precondition("n must be ≥ 1".into()));
    }
    if [l, alpha, b, beta].iter().any(|&c| !(c >= 0.0)) {
        return Err(Error::Precondition("bound constants must be nonnegative".into()));
    }
    let sn = (n as f64).sqrt();
    Ok(emp_risk + l * alpha * b / sn + beta / sn + ((1.0 / delta).ln() / (2.0 * n as f64)).sqrt())
}

/// Rescales `m` to spectral norm `target`.
fn with_norm<T: Scalar>(m: DenseMatrix<T>, target: f64) -> Result<DenseMatrix<T>> {
    let n = op_norm(&m)?;
    Ok(m.scale(T::of(target / n)))
}

fn orthogonal<T: Scalar>(d: usize, seed: u64) -> Result<DenseMatrix<T>> {
    qr_orthonormal(&gaussian_matrix(&mut substream(seed, "orthogonal"), d, d))
}

/// Orthogonal `W`, `S = I`, tanh correction with `‖αB‖ = 0.2`: `gamma = 1.2`.
/// `w_norm` rescales `W` (0.7 gives the convergent `gamma = 0.9` variant).
pub fn example_orthogonal<T: Scalar>(d: usize, w_norm: f64, seed: u64) -> Result<RecursiveSystem<T>> {
    let w = orthogonal::<T>(d, seed)?.scale(T::of(w_norm));
    let b = with_norm(gaussian_matrix(&mut substream(seed, "correction"), d, d), 0.2)?;
    RecursiveSystem::new(w, b, T::one(), Activation::Tanh)
}

/// Low-rank projection `S` with `‖S‖ = 0.5`, `‖W‖ = 1`, ReLU correction with
/// `‖B‖ = 0.3`: `gamma ≤ 0.8`.
pub fn example_low_rank<T: Scalar>(d: usize, seed: u64) -> Result<RecursiveSystem<T>> {
    let s = make_low_rank_projection::<T>(d, (d / 2).max(1), T::of(0.5), seed)?;
    let w = orthogonal::<T>(d, seed)?;
    let sw = crate::linalg::matmul(s.matrix(), &w)?;
    let b = with_norm(gaussian_matrix(&mut substream(seed, "correction"), d, d), 0.3)?;
    RecursiveSystem::new(sw, b, T::one(), Activation::Relu)
}

/// `S = I`, `W = diag(λ)` with `max|λ| = 0.4`, `‖B‖ = 0.5` and `α = 0.8`
/// so the correction contributes 0.4: `gamma = 0.8`.
pub fn example_diagonal<T: Scalar>(d: usize, activation: Activation, seed: u64) -> Result<RecursiveSystem<T>> {
    let mut lambda: Vec<T> = uniform_vec(&mut substream(seed, "diagonal"), d, 0.4);
    if let Some(first) = lambda.first_mut() {
        *first = T::of(0.4);
    }
    let b = with_norm(gaussian_matrix(&mut substream(seed, "correction"), d, d), 0.5)?;
    RecursiveSystem::new(DenseMatrix::from_diag(&lambda), b, T::of(0.8), activation)
}

/// Largest empirical ratio `‖F(x) − F(y)‖ / ‖x − y‖` over random pairs.
pub fn sampled_lipschitz<T: Scalar>(sys: &RecursiveSystem<T>, pairs: usize, seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let mut best = 0.0f64;
    for _ in 0..pairs {
        let x: Vec<T> = gaussian_vec(&mut rng, sys.dim(), 1.0);
        let y: Vec<T> = gaussian_vec(&mut rng, sys.dim(), 1.0);
        let num = dist(&sys.apply(&x)?, &sys.apply(&y)?).as_f64();
        let den = norm2(&x.iter().zip(&y).map(|(&a, &b)| a - b).collect::<Vec<T>>()).as_f64();
        if den > 0.0 {
            best = best.max(num / den);
        }
    }
    Ok(best)
}
