//! Sequence-level training objectives over policy log-probabilities:
//! NLL (SFT), unlikelihood (UL), their convex combination UFT, gradient
//! ascent (GA), SimPO and CPO-SimPO.
//!
//! Every objective is a function of per-sequence totals `log π(y|x)`. Its
//! parameter gradient is `Σ_i (∂L/∂total_i) ∇ log π(y_i|x_i)`, so each
//! objective reports its value together with those per-sequence weights and
//! [`loss_gradient`] accumulates the weighted policy gradients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::policy::{Policy, PolicyError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Nll,
    Ul,
    Uft,
    Ga,
    Simpo,
    CpoSimpo,
}

impl ObjectiveKind {
    pub fn is_paired(self) -> bool {
        matches!(self, ObjectiveKind::Simpo | ObjectiveKind::CpoSimpo)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    /// Weight of the forgetting term in UFT and GA.
    pub alpha: f64,
    pub beta: f64,
    /// SimPO target reward margin.
    pub gamma: f64,
    /// NLL coefficient of CPO-SimPO.
    pub lambda: f64,
    /// Lower clamp on `1 - π` inside UL.
    pub eps_clamp: f64,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        Self { kind: ObjectiveKind::Nll, alpha: 0.0, beta: 0.1, gamma: 0.5, lambda: 1.0, eps_clamp: 1e-12 }
    }
}

impl ObjectiveSpec {
    pub fn nll() -> Self {
        Self::default()
    }

    pub fn uft(alpha: f64) -> Self {
        Self { kind: ObjectiveKind::Uft, alpha, ..Self::default() }
    }

    pub fn of(kind: ObjectiveKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let bad = |m: &str| Err(ObjectiveError::InvalidSpec(m.into()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad("beta must be positive");
        }
        if !self.gamma.is_finite() {
            return bad("gamma must be finite");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if !(self.eps_clamp > 0.0 && self.eps_clamp < 1.0) {
            return bad("eps_clamp must lie in (0, 1)");
        }
        Ok(())
    }

    /// Whether the objective reads the positive batch.
    pub fn uses_pos(&self) -> bool {
        match self.kind {
            ObjectiveKind::Ul => false,
            ObjectiveKind::Uft | ObjectiveKind::Ga => self.alpha < 1.0,
            _ => true,
        }
    }

    /// Whether the objective reads the negative batch.
    pub fn uses_neg(&self) -> bool {
        match self.kind {
            ObjectiveKind::Nll => false,
            ObjectiveKind::Uft | ObjectiveKind::Ga => self.alpha > 0.0,
            _ => true,
        }
    }

    /// Whether the per-sequence weights depend on the totals.
    fn weights_need_totals(&self) -> bool {
        !matches!(self.kind, ObjectiveKind::Nll | ObjectiveKind::Ga)
    }

    /// Objective value and `∂L/∂total` for every positive and negative
    /// sequence. `len_*` are token counts of the continuations.
    pub fn evaluate(&self, pos: &[f64], len_pos: &[usize], neg: &[f64], len_neg: &[usize]) -> Result<Evaluated, ObjectiveError> {
        self.validate()?;
        let need = |b: &[f64], name: &'static str| {
            if b.is_empty() {
                Err(ObjectiveError::EmptyRequiredBatch(name))
            } else {
                Ok(())
            }
        };
        if self.uses_pos() {
            need(pos, "positive")?;
        }
        if self.uses_neg() {
            need(neg, "negative")?;
        }
        let a = self.alpha;
        let mut out = Evaluated { value: 0.0, w_pos: vec![0.0; pos.len()], w_neg: vec![0.0; neg.len()] };
        match self.kind {
            ObjectiveKind::Nll => {
                out.value = nll_loss(pos)?;
                fill_mean_weight(&mut out.w_pos, -1.0);
            }
            ObjectiveKind::Ul => {
                out.value = ul_loss(neg, self.eps_clamp)?;
                ul_weights(neg, self.eps_clamp, 1.0, &mut out.w_neg);
            }
            ObjectiveKind::Uft => {
                if a == 0.0 {
                    out.value = nll_loss(pos)?;
                    fill_mean_weight(&mut out.w_pos, -1.0);
                } else if a == 1.0 {
                    out.value = ul_loss(neg, self.eps_clamp)?;
                    ul_weights(neg, self.eps_clamp, 1.0, &mut out.w_neg);
                } else {
                    out.value = (1.0 - a) * nll_loss(pos)? + a * ul_loss(neg, self.eps_clamp)?;
                    fill_mean_weight(&mut out.w_pos, -(1.0 - a));
                    ul_weights(neg, self.eps_clamp, a, &mut out.w_neg);
                }
            }
            ObjectiveKind::Ga => {
                let mut value = 0.0;
                if a < 1.0 {
                    value += (1.0 - a) * nll_loss(pos)?;
                    fill_mean_weight(&mut out.w_pos, -(1.0 - a));
                }
                if a > 0.0 {
                    value += a * ga_loss(neg)?;
                    fill_mean_weight(&mut out.w_neg, a);
                }
                out.value = value;
            }
            ObjectiveKind::Simpo | ObjectiveKind::CpoSimpo => {
                let lambda = if self.kind == ObjectiveKind::CpoSimpo { self.lambda } else { 0.0 };
                let (value, wp, wn) = simpo_parts(pos, len_pos, neg, len_neg, self.beta, self.gamma)?;
                out.w_pos = wp;
                out.w_neg = wn;
                out.value = value;
                if self.kind == ObjectiveKind::CpoSimpo {
                    out.value = value + lambda * nll_loss(pos)?;
                    let n = pos.len() as f64;
                    for w in &mut out.w_pos {
                        *w -= lambda / n;
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluated {
    pub value: f64,
    pub w_pos: Vec<f64>,
    pub w_neg: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ObjectiveError {
    #[error("empty required batch: {0}")]
    EmptyRequiredBatch(&'static str),
    #[error("paired loss needs equally many chosen and rejected sequences")]
    UnpairedInput,
    #[error("invalid objective: {0}")]
    InvalidSpec(String),
    #[error("non-finite gradient")]
    NonfiniteGradient,
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

fn fill_mean_weight(w: &mut [f64], scale: f64) {
    let n = w.len() as f64;
    for v in w {
        *v = scale / n;
    }
}

fn nonempty(totals: &[f64]) -> Result<(), ObjectiveError> {
    if totals.is_empty() {
        Err(ObjectiveError::EmptyRequiredBatch("batch"))
    } else {
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `-mean(total)`.
pub fn nll_loss(totals_pos: &[f64]) -> Result<f64, ObjectiveError> {
    nonempty(totals_pos)?;
    Ok(-mean(totals_pos))
}

/// `log(1 - exp(t))` for `t <= 0`, accurate on both ends.
pub fn log1mexp(t: f64) -> f64 {
    if t >= 0.0 {
        f64::NEG_INFINITY
    } else if t > -std::f64::consts::LN_2 {
        (-t.exp_m1()).ln()
    } else {
        (-t.exp()).ln_1p()
    }
}

/// Per-sequence unlikelihood `-log(max(1 - π, eps))`.
pub fn ul_term(total: f64, eps_clamp: f64) -> f64 {
    -log1mexp(total).max(eps_clamp.ln())
}

/// `∂ ul_term / ∂ total`: the adaptive penalty `π / (1 - π)`, zero where
/// the clamp is active.
pub fn ul_term_grad(total: f64, eps_clamp: f64) -> f64 {
    if log1mexp(total) <= eps_clamp.ln() {
        0.0
    } else {
        1.0 / (-total).exp_m1()
    }
}

/// `mean(-log(1 - π))` with `1 - π` clamped below at `eps_clamp`.
pub fn ul_loss(totals_neg: &[f64], eps_clamp: f64) -> Result<f64, ObjectiveError> {
    nonempty(totals_neg)?;
    Ok(totals_neg.iter().map(|&t| ul_term(t, eps_clamp)).sum::<f64>() / totals_neg.len() as f64)
}

fn ul_weights(neg: &[f64], eps: f64, scale: f64, w: &mut [f64]) {
    let n = neg.len() as f64;
    for (wi, &t) in w.iter_mut().zip(neg) {
        *wi = scale * ul_term_grad(t, eps) / n;
    }
}

/// `(1 - α) nll + α ul`; the UL term is skipped entirely at `α = 0`.
pub fn uft_loss(totals_pos: &[f64], totals_neg: &[f64], alpha: f64, eps_clamp: f64) -> Result<f64, ObjectiveError> {
    ObjectiveSpec { alpha, eps_clamp, ..ObjectiveSpec::uft(alpha) }
        .evaluate(totals_pos, &vec![1; totals_pos.len()], totals_neg, &vec![1; totals_neg.len()])
        .map(|e| e.value)
}

/// Gradient-ascent term: `mean(log π(y⁻|x))`.
pub fn ga_loss(totals_neg: &[f64]) -> Result<f64, ObjectiveError> {
    nonempty(totals_neg)?;
    Ok(mean(totals_neg))
}

/// `log(1 + exp(a))` without overflow.
pub fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

fn simpo_parts(
    pos: &[f64],
    len_pos: &[usize],
    neg: &[f64],
    len_neg: &[usize],
    beta: f64,
    gamma: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>), ObjectiveError> {
    if pos.len() != neg.len() || len_pos.len() != pos.len() || len_neg.len() != neg.len() {
        return Err(ObjectiveError::UnpairedInput);
    }
    nonempty(pos)?;
    let n = pos.len() as f64;
    let mut value = 0.0;
    let mut wp = Vec::with_capacity(pos.len());
    let mut wn = Vec::with_capacity(neg.len());
    for i in 0..pos.len() {
        let (lp, ln) = (len_pos[i].max(1) as f64, len_neg[i].max(1) as f64);
        let z = beta / lp * pos[i] - beta / ln * neg[i] - gamma;
        value += softplus(-z);
        let s = sigmoid(-z);
        wp.push(-s * beta / lp / n);
        wn.push(s * beta / ln / n);
    }
    Ok((value / n, wp, wn))
}

/// `mean(-log σ(β/|y⁺| log π(y⁺|x) - β/|y⁻| log π(y⁻|x) - γ))` over pairs.
pub fn simpo_loss(pos: &[f64], len_pos: &[usize], neg: &[f64], len_neg: &[usize], beta: f64, gamma: f64) -> Result<f64, ObjectiveError> {
    simpo_parts(pos, len_pos, neg, len_neg, beta, gamma).map(|(v, _, _)| v)
}

/// SimPO plus `λ` times the NLL of the chosen sequences.
pub fn cpo_simpo_loss(
    pos: &[f64],
    len_pos: &[usize],
    neg: &[f64],
    len_neg: &[usize],
    beta: f64,
    gamma: f64,
    lambda: f64,
) -> Result<f64, ObjectiveError> {
    Ok(simpo_loss(pos, len_pos, neg, len_neg, beta, gamma)? + lambda * nll_loss(pos)?)
}

/// A prompt/continuation pair of token ids.
pub type Sequence = (Vec<u32>, Vec<u32>);

/// Objective value, gradient and the per-sequence totals it was computed
/// from.
#[derive(Clone, Debug)]
pub struct LossGradient {
    pub value: f64,
    pub grad: Vec<f64>,
    pub totals_pos: Vec<f64>,
    pub totals_neg: Vec<f64>,
}

/// Sequences are processed in chunks of this many; chunk gradients are
/// summed in chunk order, so the result does not depend on thread count.
pub const GRAD_CHUNK: usize = 8;

/// Value and parameter gradient of `spec` on the given batches. For the
/// paired objectives `pos[i]` and `neg[i]` form one preference pair.
pub fn loss_gradient(policy: &dyn Policy, spec: &ObjectiveSpec, pos: &[Sequence], neg: &[Sequence]) -> Result<LossGradient, ObjectiveError> {
    spec.validate()?;
    let pos: &[Sequence] = if spec.uses_pos() { pos } else { &[] };
    let neg: &[Sequence] = if spec.uses_neg() { neg } else { &[] };
    let len_pos: Vec<usize> = pos.iter().map(|s| s.1.len()).collect();
    let len_neg: Vec<usize> = neg.iter().map(|s| s.1.len()).collect();

    let (totals_pos, totals_neg, eval) = if spec.weights_need_totals() {
        let tp = totals(policy, pos)?;
        let tn = totals(policy, neg)?;
        let e = spec.evaluate(&tp, &len_pos, &tn, &len_neg)?;
        (tp, tn, e)
    } else {
        // Weights are constants: evaluate on placeholder totals, fill in the
        // real value after the gradient pass.
        let e = spec.evaluate(&vec![0.0; pos.len()], &len_pos, &vec![0.0; neg.len()], &len_neg)?;
        (Vec::new(), Vec::new(), e)
    };

    let jobs: Vec<(&Sequence, f64)> = pos.iter().zip(eval.w_pos.iter().copied()).chain(neg.iter().zip(eval.w_neg.iter().copied())).collect();
    let n_params = policy.params().len();
    let chunks: Vec<Result<(Vec<f64>, Vec<f64>), PolicyError>> = jobs
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; n_params];
            let mut t = Vec::with_capacity(chunk.len());
            for ((x, y), w) in chunk {
                t.push(policy.accumulate_grad(x, y, *w, &mut g)?);
            }
            Ok((g, t))
        })
        .collect();
    let mut grad = vec![0.0; n_params];
    let mut all_totals = Vec::with_capacity(jobs.len());
    for c in chunks {
        let (g, t) = c?;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        all_totals.extend(t);
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(ObjectiveError::NonfiniteGradient);
    }

    let (value, totals_pos, totals_neg) = if spec.weights_need_totals() {
        (eval.value, totals_pos, totals_neg)
    } else {
        let tn = all_totals.split_off(pos.len());
        let e = spec.evaluate(&all_totals, &len_pos, &tn, &len_neg)?;
        (e.value, all_totals, tn)
    };
    Ok(LossGradient { value, grad, totals_pos, totals_neg })
}

/// Objective value only.
pub fn loss_value(policy: &dyn Policy, spec: &ObjectiveSpec, pos: &[Sequence], neg: &[Sequence]) -> Result<f64, ObjectiveError> {
    let pos: &[Sequence] = if spec.uses_pos() { pos } else { &[] };
    let neg: &[Sequence] = if spec.uses_neg() { neg } else { &[] };
    let len_pos: Vec<usize> = pos.iter().map(|s| s.1.len()).collect();
    let len_neg: Vec<usize> = neg.iter().map(|s| s.1.len()).collect();
    let tp = totals(policy, pos)?;
    let tn = totals(policy, neg)?;
    Ok(spec.evaluate(&tp, &len_pos, &tn, &len_neg)?.value)
}

fn totals(policy: &dyn Policy, seqs: &[Sequence]) -> Result<Vec<f64>, PolicyError> {
    seqs.par_iter()
        .map(|(x, y)| Ok(policy.token_logprobs(x, y)?.iter().sum()))
        .collect()
}
