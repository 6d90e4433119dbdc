//! Planning-budget policies: how many zero-input planning steps an episode
//! gets, as a function of instance size, plus the stochastic extension used
//! for fine-tuning and its deterministic control.

use crate::error::{DncError, Result};
use crate::rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Size metadata a policy may consult.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMeta {
    /// Input size n (task-specific: edges, items, or points).
    pub n: usize,
    pub nodes: Option<usize>,
    pub edges: Option<usize>,
}

impl InstanceMeta {
    pub fn sized(n: usize) -> Self {
        InstanceMeta {
            n,
            nodes: None,
            edges: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BudgetKind {
    Constant { c: u32 },
    Linear { k: f64 },
    Quadratic,
    EdgesTimesNodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StochasticExtra {
    #[default]
    Off,
    /// Extra steps drawn from a geometric distribution tuned so the chance
    /// of stopping within an additional p(n) steps is at least `confidence`.
    Geometric,
    /// The control condition: the geometric draw replaced by its expected
    /// value, rounded.
    DeterministicExpected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetPolicy {
    pub kind: BudgetKind,
    pub stochastic: StochasticExtra,
    pub confidence: f64,
}

impl BudgetPolicy {
    pub fn constant(c: u32) -> Self {
        BudgetPolicy {
            kind: BudgetKind::Constant { c },
            stochastic: StochasticExtra::Off,
            confidence: 0.95,
        }
    }

    pub fn linear(k: f64) -> Self {
        BudgetPolicy {
            kind: BudgetKind::Linear { k },
            stochastic: StochasticExtra::Off,
            confidence: 0.95,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            BudgetKind::Linear { k } if !(k > 0.0) => {
                return Err(DncError::Config(format!("linear budget needs k > 0, got {k}")))
            }
            _ => {}
        }
        if !(0.0 < self.confidence && self.confidence < 1.0) {
            return Err(DncError::Config(format!(
                "stochastic confidence must be in (0,1), got {}",
                self.confidence
            )));
        }
        Ok(())
    }

    /// Base planning steps for an instance: constant(c) → c,
    /// linear(k) → round(k·n) (half-up), quadratic → n², and the
    /// |V|·|E| rule for graph tasks.
    pub fn planning_steps(&self, meta: &InstanceMeta) -> Result<u32> {
        self.validate()?;
        let n = meta.n as f64;
        Ok(match self.kind {
            BudgetKind::Constant { c } => c,
            BudgetKind::Linear { k } => (k * n + 0.5).floor() as u32,
            BudgetKind::Quadratic => (meta.n * meta.n) as u32,
            BudgetKind::EdgesTimesNodes => {
                let (v, e) = match (meta.nodes, meta.edges) {
                    (Some(v), Some(e)) => (v, e),
                    _ => {
                        return Err(DncError::Config(
                            "edges-times-nodes budget requires graph metadata (|V|, |E|)".into(),
                        ))
                    }
                };
                (v * e) as u32
            }
        })
    }

    /// Geometric success probability: the tightest q with
    /// `P(X ≤ p(n)) = 1 − (1−q)^{p(n)} = confidence`.
    pub fn geometric_q(&self, base_p: u32) -> Result<f64> {
        if base_p == 0 {
            return Err(DncError::Config(
                "stochastic extra steps require a base planning budget ≥ 1".into(),
            ));
        }
        Ok(1.0 - (1.0 - self.confidence).powf(1.0 / base_p as f64))
    }

    /// Extra planning steps on top of p(n). Geometric mode draws
    /// X ~ Geometric(q) on {1, 2, ...}; the deterministic control returns
    /// round(1/q), the distribution's expected value.
    pub fn extra_steps(&self, base_p: u32, rng: &mut ChaCha8Rng) -> Result<u32> {
        match self.stochastic {
            StochasticExtra::Off => Ok(0),
            StochasticExtra::Geometric => {
                let q = self.geometric_q(base_p)?;
                Ok(sample_geometric(q, rng))
            }
            StochasticExtra::DeterministicExpected => {
                let q = self.geometric_q(base_p)?;
                Ok((1.0 / q).round() as u32)
            }
        }
    }
}

/// Inverse-CDF draw from Geometric(q) supported on {1, 2, ...}.
pub fn sample_geometric(q: f64, rng: &mut ChaCha8Rng) -> u32 {
    let u = rng::uniform(rng);
    // X = ceil(ln(1-u) / ln(1-q)); 1-u in (0,1].
    let x = ((1.0 - u).ln() / (1.0 - q).ln()).ceil();
    x.max(1.0) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RootSeed, Stream};

    #[test]
    fn planning_steps_shapes() {
        let any = InstanceMeta::sized(37);
        assert_eq!(BudgetPolicy::constant(10).planning_steps(&any).unwrap(), 10);

        let lin = BudgetPolicy::linear(1.5);
        assert_eq!(lin.planning_steps(&InstanceMeta::sized(30)).unwrap(), 45);
        // Half-up rounding: 1.5 * 3 = 4.5 -> 5.
        assert_eq!(lin.planning_steps(&InstanceMeta::sized(3)).unwrap(), 5);

        let quad = BudgetPolicy {
            kind: BudgetKind::Quadratic,
            stochastic: StochasticExtra::Off,
            confidence: 0.95,
        };
        assert_eq!(quad.planning_steps(&InstanceMeta::sized(12)).unwrap(), 144);

        let ve = BudgetPolicy {
            kind: BudgetKind::EdgesTimesNodes,
            stochastic: StochasticExtra::Off,
            confidence: 0.95,
        };
        let meta = InstanceMeta {
            n: 9,
            nodes: Some(7),
            edges: Some(9),
        };
        assert_eq!(ve.planning_steps(&meta).unwrap(), 63);
        assert!(ve.planning_steps(&InstanceMeta::sized(9)).is_err());
    }

    #[test]
    fn monotone_in_n() {
        let policies = [
            BudgetPolicy::linear(0.7),
            BudgetPolicy {
                kind: BudgetKind::Quadratic,
                stochastic: StochasticExtra::Off,
                confidence: 0.95,
            },
        ];
        for p in policies {
            let mut prev = 0;
            for n in 1..200 {
                let v = p.planning_steps(&InstanceMeta::sized(n)).unwrap();
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn q_solves_the_cdf_equation() {
        let pol = BudgetPolicy {
            kind: BudgetKind::Constant { c: 10 },
            stochastic: StochasticExtra::Geometric,
            confidence: 0.95,
        };
        // Closed-form solve of 1 - (1-q)^10 = 0.95.
        let q = pol.geometric_q(10).unwrap();
        assert!((q - (1.0 - 0.05f64.powf(0.1))).abs() < 1e-15);
        assert!((q - 0.2589).abs() < 1e-4);
        for p in [1u32, 10, 75] {
            let q = pol.geometric_q(p).unwrap();
            let cdf = 1.0 - (1.0 - q).powi(p as i32);
            assert!((cdf - 0.95).abs() < 1e-12);
        }
        assert!(pol.geometric_q(0).is_err());
    }

    #[test]
    fn deterministic_expected_value() {
        let pol = BudgetPolicy {
            kind: BudgetKind::Constant { c: 10 },
            stochastic: StochasticExtra::DeterministicExpected,
            confidence: 0.95,
        };
        let mut rng = RootSeed(0).stream(Stream::Budget);
        // 1/q = 3.8629... -> 4.
        assert_eq!(pol.extra_steps(10, &mut rng).unwrap(), 4);
    }

    #[test]
    fn geometric_sampler_statistics() {
        let pol = BudgetPolicy {
            kind: BudgetKind::Constant { c: 10 },
            stochastic: StochasticExtra::Geometric,
            confidence: 0.95,
        };
        let q = pol.geometric_q(10).unwrap();
        let mut rng = RootSeed(99).stream(Stream::Budget);
        let n = 100_000;
        let mut sum = 0.0;
        let mut within = 0usize;
        let mut min = u32::MAX;
        for _ in 0..n {
            let x = pol.extra_steps(10, &mut rng).unwrap();
            sum += x as f64;
            if x <= 10 {
                within += 1;
            }
            min = min.min(x);
        }
        assert!(min >= 1, "support starts at 1");
        let mean = sum / n as f64;
        let true_mean = 1.0 / q;
        let sd = (1.0 - q).sqrt() / q;
        let se = sd / (n as f64).sqrt();
        assert!(
            (mean - true_mean).abs() < 3.0 * se,
            "sample mean {mean} vs expected {true_mean} (3se = {})",
            3.0 * se
        );
        let frac = within as f64 / n as f64;
        assert!(frac >= 0.95 - 0.01, "empirical CDF at p(n): {frac}");
    }
}
