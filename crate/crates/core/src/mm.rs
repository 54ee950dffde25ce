//! Incremental stochastic majorization-minimization engine.
//!
//! The engine maintains a sufficient statistic `s` and the parameter
//! `θ = θ̄(s)` it maps to. Each sample moves `s` toward the statistic of the
//! current surrogate, `s ← s + γ (S̄(θ̄(s); z) − s)`, and re-solves for `θ`.

use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::sample::Sample;

/// Exponential-family surrogate contract.
///
/// Statistics are flat vectors; the family knows their block layout.
pub trait SurrogateFamily {
    type Params: Clone + Debug;

    /// Length of the statistic vector.
    fn stat_len(&self) -> usize;

    /// `S̄(θ; z)`.
    fn suff_stat(&self, theta: &Self::Params, sample: &Sample) -> Result<Vec<f64>>;

    /// `θ̄(s) = argmin_θ −ψ(θ) + ⟨s, φ(θ)⟩`.
    fn solve(&self, s: &[f64]) -> Result<Self::Params>;

    /// Membership test for the admissible statistic set. Reports
    /// [`Error::Invariant`] when `s` lies outside it.
    fn check_admissible(&self, s: &[f64]) -> Result<()>;

    /// Per-sample model loss `f(θ; z)` (negative log predictive density).
    fn loss(&self, theta: &Self::Params, sample: &Sample) -> Result<f64>;

    /// Majorizer value at `θ` built around `anchor`.
    fn surrogate_loss(&self, theta: &Self::Params, sample: &Sample, anchor: &Self::Params) -> Result<f64>;

    /// `φ(θ)`.
    fn phi(&self, theta: &Self::Params) -> Vec<f64>;

    /// `ψ(θ)`. Both surrogates implemented here have a constant `ψ`.
    fn psi(&self, _theta: &Self::Params) -> f64 {
        0.0
    }
}

/// `h(s; θ) = −ψ(θ) + ⟨s, φ(θ)⟩`.
pub fn surrogate_objective<F: SurrogateFamily>(family: &F, s: &[f64], theta: &F::Params) -> f64 {
    let phi = family.phi(theta);
    debug_assert_eq!(phi.len(), s.len());
    -family.psi(theta) + s.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>()
}

/// Step sizes `γ_n = γ₀ (n + offset)^(−α)`.
///
/// A positive `offset` lets an initial statistic that already averages
/// `offset` samples keep its weight instead of being overwritten by the
/// first large steps.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepSchedule {
    pub gamma0: f64,
    pub alpha: f64,
    #[serde(default)]
    pub offset: usize,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self { gamma0: 0.9, alpha: 0.6, offset: 0 }
    }
}

impl StepSchedule {
    pub fn new(gamma0: f64, alpha: f64) -> Result<Self> {
        let s = Self { gamma0, alpha, offset: 0 };
        s.validate()?;
        Ok(s)
    }

    /// `γ₀ ∈ (0,1)` and `α ∈ (1/2, 1]` make `Σγ` diverge and `Σγ²` converge.
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 > 0.0 && self.gamma0 < 1.0) {
            return Err(Error::param(format!("gamma0 = {} not in (0,1)", self.gamma0)));
        }
        if !(self.alpha > 0.5 && self.alpha <= 1.0) {
            return Err(Error::param(format!("alpha = {} not in (1/2,1]", self.alpha)));
        }
        Ok(())
    }

    pub fn with_offset(self, offset: usize) -> Self {
        Self { offset, ..self }
    }

    /// `γ_n` for `n ≥ 1`.
    pub fn gamma(&self, n: usize) -> f64 {
        assert!(n >= 1, "step index starts at 1");
        self.gamma0 * ((n + self.offset) as f64).powf(-self.alpha)
    }
}

/// Current statistic, its parameter image and the iteration counter.
#[derive(Debug, Clone, PartialEq)]
pub struct MmState<P> {
    pub s: Vec<f64>,
    pub theta: P,
    pub iteration: usize,
}

impl<P: Clone + Debug> MmState<P> {
    /// Builds the state for `s₀`, checking admissibility and solving for `θ₀`.
    pub fn from_stats<F>(family: &F, s: Vec<f64>) -> Result<Self>
    where
        F: SurrogateFamily<Params = P>,
    {
        if s.len() != family.stat_len() {
            return Err(Error::shape(format!(
                "statistic has length {}, family expects {}",
                s.len(),
                family.stat_len()
            )));
        }
        family.check_admissible(&s)?;
        let theta = family.solve(&s)?;
        Ok(Self { s, theta, iteration: 0 })
    }
}

/// One recursion step using the schedule's `γ_{n+1}`.
pub fn mm_step<F: SurrogateFamily>(
    state: &MmState<F::Params>,
    sample: &Sample,
    schedule: &StepSchedule,
    family: &F,
) -> Result<MmState<F::Params>> {
    mm_step_with_gamma(state, sample, schedule.gamma(state.iteration + 1), family)
}

/// One recursion step with an explicit step size `γ ∈ (0, 1]`.
pub fn mm_step_with_gamma<F: SurrogateFamily>(
    state: &MmState<F::Params>,
    sample: &Sample,
    gamma: f64,
    family: &F,
) -> Result<MmState<F::Params>> {
    let n = state.iteration + 1;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::param(format!("step size {gamma} not in (0,1]")));
    }
    if !sample.is_finite() {
        return Err(Error::Numeric {
            iteration: n,
            message: "sample contains non-finite values".into(),
        });
    }
    let sbar = family
        .suff_stat(&state.theta, sample)
        .map_err(|e| e.at_iteration(n))?;
    let s: Vec<f64> = state
        .s
        .iter()
        .zip(&sbar)
        .map(|(&old, &new)| old + gamma * (new - old))
        .collect();
    if let Some(i) = s.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            iteration: n,
            message: format!("statistic entry {i} is not finite"),
        });
    }
    family.check_admissible(&s).map_err(|e| e.at_iteration(n))?;
    let theta = family.solve(&s).map_err(|e| e.at_iteration(n))?;
    Ok(MmState { s, theta, iteration: n })
}

/// Result of streaming a sample source through the engine.
#[derive(Debug, Clone)]
pub struct StreamOutcome<P> {
    pub state: MmState<P>,
    pub iterations: usize,
}

/// Applies [`mm_step`] to each sample in order, calling `hook(n, θ_n, s_n)`
/// after every step.
pub fn run_stream<'a, F, I, H>(
    initial: MmState<F::Params>,
    samples: I,
    schedule: &StepSchedule,
    family: &F,
    mut hook: H,
) -> Result<StreamOutcome<F::Params>>
where
    F: SurrogateFamily,
    I: IntoIterator<Item = &'a Sample>,
    H: FnMut(usize, &F::Params, &[f64]),
{
    schedule.validate()?;
    let mut state = initial;
    let mut iterations = 0;
    for sample in samples {
        state = mm_step(&state, sample, schedule, family)?;
        iterations += 1;
        hook(state.iteration, &state.theta, &state.s);
    }
    Ok(StreamOutcome { state, iterations })
}

/// Empirical mean field `η̂(s) = mean_z S̄(θ̄(s); z) − s` over a holdout batch.
pub fn mean_field<F: SurrogateFamily>(state: &MmState<F::Params>, holdout: &[Sample], family: &F) -> Result<Vec<f64>> {
    if holdout.is_empty() {
        return Err(Error::arg("holdout batch is empty"));
    }
    let mut acc = vec![0.0; state.s.len()];
    for z in holdout {
        let sbar = family.suff_stat(&state.theta, z)?;
        for (a, v) in acc.iter_mut().zip(sbar) {
            *a += v;
        }
    }
    let m = holdout.len() as f64;
    Ok(acc.iter().zip(&state.s).map(|(a, s)| a / m - s).collect())
}

/// `‖η̂(s)‖∞`; a small value certifies an approximate fixed point.
pub fn stationarity_residual<F: SurrogateFamily>(
    state: &MmState<F::Params>,
    holdout: &[Sample],
    family: &F,
) -> Result<f64> {
    Ok(mean_field(state, holdout, family)?
        .into_iter()
        .fold(0.0, |m, v| m.max(v.abs())))
}
