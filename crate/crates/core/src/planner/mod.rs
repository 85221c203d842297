//! Cross-entropy-method MPC with colored-noise sampling, elite reuse and
//! shift initialization, scoring candidates by expected task cost plus
//! aleatoric penalty, epistemic bonus and chance-constraint penalty.

mod noise;

pub use noise::{colored_noise, psd_log_slope, ColoredNoise};

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{propagate, DynamicsModel, PropagationMode};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SimRng};
use crate::safety::{safety_cost, BoxConstraint, SafetyConfig};
use crate::uncertainty::{aleatoric_entropy_penalty, uncertainty_costs, AleatoricMeasure, CostWeights, UncertaintyReport};

/// Per-transition task cost `c(x_t, u_t, x_{t+1})`.
pub trait CostFunction {
    fn step_cost(&self, state: &[f64], action: &[f64], next_state: &[f64]) -> f64;
}

impl<F> CostFunction for F
where
    F: Fn(&[f64], &[f64], &[f64]) -> f64,
{
    fn step_cost(&self, state: &[f64], action: &[f64], next_state: &[f64]) -> f64 {
        self(state, action, next_state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub horizon: usize,
    pub num_samples: usize,
    pub particles: usize,
    pub elite_size: usize,
    pub opt_iterations: usize,
    pub noise_beta: f64,
    /// Momentum of the sampling distribution: `new = (1 - alpha) * elite + alpha * old`.
    pub alpha: f64,
    pub init_std: f64,
    pub fraction_elites_reused: f64,
    pub keep_previous_elites: bool,
    pub shift_elites_over_time: bool,
    pub execute_best_elite: bool,
    pub use_mean_actions: bool,
    pub relative_init: bool,
    pub w_aleatoric: f64,
    pub w_epistemic: f64,
    pub aleatoric_measure: AleatoricMeasure,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 30,
            num_samples: 128,
            particles: 20,
            elite_size: 10,
            opt_iterations: 3,
            noise_beta: 2.0,
            alpha: 0.1,
            init_std: 0.5,
            fraction_elites_reused: 0.3,
            keep_previous_elites: true,
            shift_elites_over_time: true,
            execute_best_elite: true,
            use_mean_actions: true,
            relative_init: true,
            w_aleatoric: 0.0,
            w_epistemic: 0.0,
            aleatoric_measure: AleatoricMeasure::Variance,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.num_samples == 0 || self.elite_size == 0 || self.elite_size > self.num_samples {
            return bad("need 1 <= elite_size <= num_samples");
        }
        if self.opt_iterations == 0 {
            return bad("opt_iterations must be at least 1");
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.fraction_elites_reused) {
            return bad("fraction_elites_reused must lie in [0, 1)");
        }
        if !(self.init_std > 0.0) {
            return bad("init_std must be positive");
        }
        if !(self.noise_beta >= 0.0) {
            return bad("noise_beta must be nonnegative");
        }
        self.weights(0.0).validate()
    }

    pub fn weights(&self, w_safety: f64) -> CostWeights {
        CostWeights {
            w_aleatoric: self.w_aleatoric,
            w_epistemic: self.w_epistemic,
            w_safety,
        }
    }
}

/// Chance constraint attached to a planner.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetySetup {
    pub bx: BoxConstraint,
    pub cfg: SafetyConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub task: f64,
    pub aleatoric: f64,
    pub epistemic: f64,
    pub safety: f64,
    pub total: f64,
}

/// Everything [`evaluate_sequence`] needs besides the model and the sequence.
pub struct Scoring<'a, C: ?Sized> {
    pub cost_fn: &'a C,
    pub weights: CostWeights,
    pub aleatoric_measure: AleatoricMeasure,
    pub safety: Option<&'a SafetySetup>,
    pub particles: usize,
    pub mode: PropagationMode,
}

/// Propagate `actions` from `initial` and score it: mean particle task cost
/// summed over the horizon, plus uncertainty and safety terms.
pub fn evaluate_sequence<M, C>(model: &M, initial: &[f64], actions: &Array2<f64>, scoring: &Scoring<'_, C>, rng: &mut SimRng) -> Result<CostBreakdown>
where
    M: DynamicsModel + ?Sized,
    C: CostFunction + ?Sized,
{
    let bundle = propagate(model, initial, actions, scoring.particles, rng, scoring.mode)?;
    let h = bundle.horizon();
    let b = bundle.num_particles();
    let mut task = 0.0;
    for t in 0..h {
        let u = actions.row(t);
        let u = u.as_slice().expect("contiguous action row");
        let mut step = 0.0;
        for p in 0..b {
            let x = bundle.particles.slice(ndarray::s![t, p, ..]);
            let x1 = bundle.particles.slice(ndarray::s![t + 1, p, ..]);
            step += scoring.cost_fn.step_cost(x.as_slice().unwrap(), u, x1.as_slice().unwrap());
        }
        task += step / b as f64;
    }

    let w = &scoring.weights;
    let (mut aleatoric, mut epistemic) = (0.0, 0.0);
    if w.w_aleatoric != 0.0 || w.w_epistemic != 0.0 {
        let report = UncertaintyReport::from_bundle(&bundle);
        let (pen, bonus) = uncertainty_costs(&report, w)?;
        aleatoric = match scoring.aleatoric_measure {
            AleatoricMeasure::Variance => pen,
            AleatoricMeasure::Entropy => aleatoric_entropy_penalty(&report, w)?,
        };
        epistemic = bonus;
    }
    let safety = match scoring.safety {
        Some(s) if s.cfg.enabled => safety_cost(&bundle, &s.bx, &s.cfg)?,
        _ => 0.0,
    };
    Ok(CostBreakdown {
        task,
        aleatoric,
        epistemic,
        safety,
        total: task + aleatoric + epistemic + safety,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub best_total: f64,
    pub mean_total: f64,
    /// Best total among the elites kept after this round.
    pub best_elite_total: f64,
    pub num_candidates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanDiagnostics {
    pub rounds: Vec<RoundStats>,
    /// Breakdown of the lowest-cost elite after the last round.
    pub winner: CostBreakdown,
    /// Index of the winner among the final round's candidates.
    pub winner_index: usize,
    pub final_round_totals: Vec<f64>,
    pub final_elites: Vec<Array2<f64>>,
    pub executed_sequence: Array2<f64>,
}

/// CEM-MPC controller holding the warm-start state between calls.
#[derive(Debug)]
pub struct Planner {
    config: PlannerConfig,
    low: Vec<f64>,
    high: Vec<f64>,
    safety: Option<SafetySetup>,
    noise: ColoredNoise,
    mode: PropagationMode,
    mean: Array2<f64>,
    stored_elites: Vec<Array2<f64>>,
}

fn shift_sequence(seq: &Array2<f64>) -> Array2<f64> {
    let h = seq.nrows();
    let mut out = seq.clone();
    if h > 1 {
        out.slice_mut(ndarray::s![..h - 1, ..]).assign(&seq.slice(ndarray::s![1.., ..]));
    }
    out
}

impl Planner {
    pub fn new(config: PlannerConfig, low: Vec<f64>, high: Vec<f64>, safety: Option<SafetySetup>) -> Result<Self> {
        config.validate()?;
        if low.len() != high.len() || low.is_empty() || low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(Error::invalid("action bounds need low < high in every dimension"));
        }
        if let Some(s) = &safety {
            s.cfg.validate()?;
        }
        // a length-1 horizon has no spectrum to color
        let beta = if config.horizon < 2 { 0.0 } else { config.noise_beta };
        let noise = ColoredNoise::new(beta, config.horizon)?;
        let mean = Self::center(&config, &low, &high);
        Ok(Self {
            config,
            low,
            high,
            safety,
            noise,
            mode: PropagationMode::Sample,
            mean,
            stored_elites: Vec::new(),
        })
    }

    fn center(config: &PlannerConfig, low: &[f64], high: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((config.horizon, low.len()), |(_, j)| 0.5 * (low[j] + high[j]))
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn set_propagation_mode(&mut self, mode: PropagationMode) {
        self.mode = mode;
    }

    /// Forget the warm start (call at episode boundaries).
    pub fn reset(&mut self) {
        self.mean = Self::center(&self.config, &self.low, &self.high);
        self.stored_elites.clear();
    }

    pub fn shifted_mean(&self) -> &Array2<f64> {
        &self.mean
    }

    pub fn stored_elites(&self) -> &[Array2<f64>] {
        &self.stored_elites
    }

    fn initial_std(&self) -> Array2<f64> {
        let c = &self.config;
        Array2::from_shape_fn((c.horizon, self.low.len()), |(_, j)| {
            if c.relative_init {
                c.init_std * 0.5 * (self.high[j] - self.low[j])
            } else {
                c.init_std
            }
        })
    }

    fn clip(&self, seq: &mut Array2<f64>) {
        for mut row in seq.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = v.clamp(self.low[j], self.high[j]);
            }
        }
    }

    /// Run the CEM rounds from `state` and return the action to execute.
    pub fn plan_step<M, C>(&mut self, state: &[f64], model: &M, cost_fn: &C, rng: &mut SimRng) -> Result<(Vec<f64>, PlanDiagnostics)>
    where
        M: DynamicsModel + ?Sized,
        C: CostFunction + ?Sized,
    {
        let c = self.config.clone();
        let m = self.low.len();
        if model.action_dim() != m || model.state_dim() != state.len() {
            return Err(Error::invalid("model dimensions do not match planner bounds or state"));
        }
        let w_safety = self.safety.as_ref().map_or(0.0, |s| s.cfg.weight());
        let scoring = Scoring {
            cost_fn,
            weights: c.weights(w_safety),
            aleatoric_measure: c.aleatoric_measure,
            safety: self.safety.as_ref(),
            particles: c.particles,
            mode: self.mode,
        };
        // common random numbers: every candidate in this call sees the same particle noise
        let eval_seed: u64 = rng.random();

        let init_std = self.initial_std();
        let std_floor = init_std.mapv(|s| 1e-3 * s);
        let mut mean = self.mean.clone();
        let mut std = init_std;
        let mut elites: Vec<(Array2<f64>, CostBreakdown)> = Vec::new();
        let mut rounds = Vec::with_capacity(c.opt_iterations);
        let mut final_totals = Vec::new();
        let mut winner_index = 0;

        for round in 0..c.opt_iterations {
            let mut candidates: Vec<Array2<f64>> = Vec::with_capacity(c.num_samples + c.elite_size + 1);
            for _ in 0..c.num_samples {
                let mut seq = &mean + &(&std * &self.noise.sample_matrix(m, rng));
                self.clip(&mut seq);
                candidates.push(seq);
            }
            if round == 0 && c.shift_elites_over_time {
                let reuse = (c.fraction_elites_reused * c.elite_size as f64).floor() as usize;
                candidates.extend(self.stored_elites.iter().take(reuse).cloned());
            }
            if c.use_mean_actions && round + 1 == c.opt_iterations {
                let mut mu = mean.clone();
                self.clip(&mut mu);
                candidates.push(mu);
            }
            let mut scored: Vec<(Array2<f64>, CostBreakdown)> = Vec::with_capacity(candidates.len() + elites.len());
            for (i, seq) in candidates.into_iter().enumerate() {
                let mut eval_rng = rng_from_seed(eval_seed);
                let cost = evaluate_sequence(model, state, &seq, &scoring, &mut eval_rng)
                    .map_err(|e| match e {
                        Error::Numeric(msg) => Error::Numeric(format!("candidate {i} in round {round}: {msg}")),
                        other => other,
                    })?;
                scored.push((seq, cost));
            }
            if round > 0 && c.keep_previous_elites {
                scored.append(&mut elites);
            }

            let totals: Vec<f64> = scored.iter().map(|(_, cb)| cb.total).collect();
            let finite: Vec<f64> = totals.iter().copied().filter(|t| t.is_finite()).collect();
            if finite.is_empty() {
                return Err(Error::Planner(format!("all candidate totals are non-finite in round {round}")));
            }
            let mut order: Vec<usize> = (0..scored.len()).collect();
            order.sort_by(|&a, &b| {
                let key = |t: f64| if t.is_finite() { t } else { f64::INFINITY };
                key(totals[a]).total_cmp(&key(totals[b])).then(a.cmp(&b))
            });
            order.truncate(c.elite_size.min(finite.len()));

            let n_el = order.len() as f64;
            let h = c.horizon;
            let mut e_mean = Array2::<f64>::zeros((h, m));
            for &i in &order {
                e_mean += &scored[i].0;
            }
            e_mean /= n_el;
            let mut e_var = Array2::<f64>::zeros((h, m));
            for &i in &order {
                let diff = &scored[i].0 - &e_mean;
                e_var += &(&diff * &diff);
            }
            e_var /= n_el;
            mean = &e_mean * (1.0 - c.alpha) + &mean * c.alpha;
            std = &e_var.mapv(f64::sqrt) * (1.0 - c.alpha) + &std * c.alpha;
            std.zip_mut_with(&std_floor, |s, &f| *s = s.max(f));

            rounds.push(RoundStats {
                best_total: totals[order[0]],
                mean_total: finite.iter().sum::<f64>() / finite.len() as f64,
                best_elite_total: totals[order[0]],
                num_candidates: scored.len(),
            });
            winner_index = order[0];
            final_totals = totals;
            let mut keep: Vec<Option<(Array2<f64>, CostBreakdown)>> = scored.into_iter().map(Some).collect();
            elites = order.iter().map(|&i| keep[i].take().expect("elite indices are distinct")).collect();
        }

        let (best_seq, winner) = elites[0].clone();
        let action: Vec<f64> = if c.execute_best_elite {
            best_seq.row(0).to_vec()
        } else {
            let mut mu = mean.clone();
            self.clip(&mut mu);
            mu.row(0).to_vec()
        };

        let mut shifted = shift_sequence(&mean);
        self.clip(&mut shifted);
        self.mean = shifted;
        self.stored_elites = if c.shift_elites_over_time {
            elites.iter().map(|(s, _)| shift_sequence(s)).collect()
        } else {
            Vec::new()
        };

        let diagnostics = PlanDiagnostics {
            rounds,
            winner,
            winner_index,
            final_round_totals: final_totals,
            final_elites: elites.into_iter().map(|(s, _)| s).collect(),
            executed_sequence: best_seq,
        };
        Ok((action, diagnostics))
    }
}

/// Mean of the elite sequences along the sample axis; exposed for tests and
/// diagnostics.
pub fn sequence_mean(seqs: &[Array2<f64>]) -> Option<Array2<f64>> {
    let views: Vec<_> = seqs.iter().map(|s| s.view().insert_axis(Axis(0))).collect();
    let stacked = ndarray::concatenate(Axis(0), &views).ok()?;
    stacked.mean_axis(Axis(0))
}
