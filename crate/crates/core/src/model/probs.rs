//! Adjacent-category logits to level probabilities.
//!
//! With cumulative sums `S_0 = 0`, `S_k = η_1 + … + η_k`, the level
//! probabilities are `π_k = exp(S_k) / Σ_j exp(S_j)`. Everything is evaluated
//! after subtracting `max_j S_j`.

/// Level probabilities at one time point together with the tail sums used by
/// residuals and derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelProbs {
    /// `π_0..π_K`.
    pub probs: Vec<f64>,
    /// `survivor[k] = P(Y ≥ k)` for `k = 0..=K` (`survivor[0] = 1`).
    pub survivor: Vec<f64>,
    /// `below[k] = P(Y < k)` for `k = 0..=K` (`below[0] = 0`).
    pub below: Vec<f64>,
    /// Cumulative sums `S_0..S_K`.
    pub cumulative: Vec<f64>,
    /// `log Σ_j exp(S_j)`.
    pub log_normalizer: f64,
}

impl LevelProbs {
    pub fn from_eta(eta: &[f64]) -> Self {
        let k = eta.len();
        let mut cumulative = Vec::with_capacity(k + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for &e in eta {
            acc += e;
            cumulative.push(acc);
        }
        let max = cumulative.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = cumulative.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();

        let mut survivor = vec![0.0; k + 1];
        let mut tail = 0.0;
        for j in (0..=k).rev() {
            tail += probs[j];
            survivor[j] = tail;
        }
        survivor[0] = 1.0;
        let mut below = vec![0.0; k + 1];
        let mut head = 0.0;
        for j in 1..=k {
            head += probs[j - 1];
            below[j] = head;
        }

        Self {
            probs,
            survivor,
            below,
            cumulative,
            log_normalizer: max + total.ln(),
        }
    }

    pub fn k(&self) -> usize {
        self.probs.len() - 1
    }

    /// `−log π_y`.
    pub fn neg_log_prob(&self, level: usize) -> f64 {
        self.log_normalizer - self.cumulative[level]
    }

    /// Residual `e_k = 1{y ≥ k} − P(Y ≥ k)` for `k = 1..=K`.
    pub fn residuals(&self, level: usize) -> Vec<f64> {
        (1..=self.k())
            .map(|k| {
                if level >= k {
                    // 1 − P(Y ≥ k) = P(Y < k), computed without cancellation.
                    self.below[k]
                } else {
                    -self.survivor[k]
                }
            })
            .collect()
    }

    /// Conditional covariance of the indicators `1{Y ≥ k}` and `1{Y ≥ l}`,
    /// i.e. `∂P(Y ≥ k)/∂η_l`; `k`, `l` are one-based.
    pub fn indicator_covariance(&self, k: usize, l: usize) -> f64 {
        let (hi, lo) = if k >= l { (k, l) } else { (l, k) };
        self.survivor[hi] * self.below[lo]
    }
}

/// `(π_0, …, π_K)` from `η = (η_1, …, η_K)`.
pub fn adjacent_to_probs(eta: &[f64]) -> Vec<f64> {
    LevelProbs::from_eta(eta).probs
}
