use serde::{Deserialize, Serialize};

use super::{CorpusError, Label, Post};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelConfig {
    /// Minimum `max(p, 1 - p)` for admission, in `(0.5, 1.0]`.
    pub confidence_threshold: f64,
    pub max_rounds: usize,
    /// Admit equally many posts per predicted class each round: the most
    /// confident `min(|P|, |N|)` of each side.
    #[serde(default)]
    pub balanced: bool,
}

impl PseudoLabelConfig {
    pub fn new(confidence_threshold: f64, max_rounds: usize) -> Result<Self, CorpusError> {
        let cfg = Self { confidence_threshold, max_rounds, balanced: false };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn balanced(self, balanced: bool) -> Self {
        Self { balanced, ..self }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(self.confidence_threshold > 0.5 && self.confidence_threshold <= 1.0) {
            return Err(CorpusError::InvalidPseudoLabelConfig(format!(
                "threshold {} not in (0.5, 1]",
                self.confidence_threshold
            )));
        }
        if self.max_rounds == 0 {
            return Err(CorpusError::InvalidPseudoLabelConfig("max_rounds must be positive".into()));
        }
        Ok(())
    }
}

impl Default for PseudoLabelConfig {
    fn default() -> Self {
        Self { confidence_threshold: 0.9, max_rounds: 3, balanced: false }
    }
}

/// A retrainable probabilistic classifier over posts.
pub trait Teacher {
    type Model;
    type Error;

    fn fit(&self, labeled: &[Post]) -> Result<Self::Model, Self::Error>;

    /// Probability of [`Label::Depressed`].
    fn p1(&self, model: &Self::Model, post: &Post) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub admitted: usize,
    pub remaining: usize,
}

#[derive(Debug)]
pub struct PseudoLabelOutcome<M> {
    /// Newly labeled posts in admission order.
    pub admitted: Vec<Post>,
    /// Round (0-based) in which each admitted post entered.
    pub admitted_round: Vec<usize>,
    pub rounds: Vec<RoundStats>,
    /// Number of teacher fits, including the initial one.
    pub trainings: usize,
    /// The most recently fitted teacher.
    pub model: M,
}

/// Self-training: fit on `seed`, admit unlabeled posts whose confidence
/// reaches the threshold, refit on seed ∪ admitted, repeat.
///
/// Posts in `unlabeled` that already carry a label are ignored. Stops after
/// `max_rounds` rounds or the first round admitting nothing.
pub fn pseudo_label<T: Teacher>(
    teacher: &T,
    seed: &[Post],
    unlabeled: &[Post],
    cfg: &PseudoLabelConfig,
) -> Result<PseudoLabelOutcome<T::Model>, T::Error> {
    let mut model = teacher.fit(seed)?;
    let mut trainings = 1;
    let mut pool: Vec<&Post> = unlabeled.iter().filter(|p| p.label.is_none()).collect();
    let mut admitted = Vec::new();
    let mut admitted_round = Vec::new();
    let mut rounds = Vec::new();

    for round in 0..cfg.max_rounds {
        let scored: Vec<(&Post, f64)> = pool.iter().map(|p| (*p, teacher.p1(&model, p))).collect();
        let confident = |p: f64| p.max(1.0 - p) >= cfg.confidence_threshold;
        let quota = if cfg.balanced {
            let pos = scored.iter().filter(|(_, p)| confident(*p) && *p >= 0.5).count();
            let neg = scored.iter().filter(|(_, p)| confident(*p) && *p < 0.5).count();
            Some(pos.min(neg))
        } else {
            None
        };
        // most confident first per class; the stable sort keeps pool order on ties
        let mut ranked: Vec<usize> = (0..scored.len()).collect();
        ranked.sort_by(|&a, &b| {
            let conf = |i: usize| scored[i].1.max(1.0 - scored[i].1);
            conf(b).total_cmp(&conf(a))
        });
        let mut take = vec![false; scored.len()];
        let (mut pos_taken, mut neg_taken) = (0, 0);
        for i in ranked {
            let p = scored[i].1;
            if !confident(p) {
                continue;
            }
            let taken = if p >= 0.5 { &mut pos_taken } else { &mut neg_taken };
            if quota.is_none_or(|q| *taken < q) {
                *taken += 1;
                take[i] = true;
            }
        }
        let mut keep = Vec::with_capacity(pool.len());
        let mut newly = 0;
        for (i, (post, p)) in scored.into_iter().enumerate() {
            if take[i] {
                let mut labeled = post.clone();
                labeled.label = Some(Label::from_bool(p >= 0.5));
                admitted.push(labeled);
                admitted_round.push(round);
                newly += 1;
            } else {
                keep.push(post);
            }
        }
        pool = keep;
        rounds.push(RoundStats { round, admitted: newly, remaining: pool.len() });
        if newly == 0 || pool.is_empty() || round + 1 == cfg.max_rounds {
            break;
        }
        let training: Vec<Post> = seed.iter().cloned().chain(admitted.iter().cloned()).collect();
        model = teacher.fit(&training)?;
        trainings += 1;
    }

    Ok(PseudoLabelOutcome { admitted, admitted_round, rounds, trainings, model })
}
