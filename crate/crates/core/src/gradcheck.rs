//! Central finite-difference checks of the analytic gradients.
//!
//! Two levels: `dF/ds` of a criterion on random scores, and `dF/dtheta` of a
//! whole model step with the samples held fixed.

use rand::Rng;

use crate::corpus::Batch;
use crate::criteria::{
    evaluate_full, evaluate_sampled, CriterionKind, LossResult, SampleView, SampledScores,
};
use crate::error::Result;
use crate::model::{Candidates, Combiner, ModelParams};
use crate::rng::StreamRng;
use crate::sampling::{NoiseDistribution, SampleSet, Sampler, SamplerMode};

pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-4)`; the floor keeps near-zero gradients from
/// dominating.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

fn default_mode(kind: CriterionKind) -> SamplerMode {
    match kind.criterion() {
        crate::criteria::Criterion::Mode2 => SamplerMode::ExcludeTarget,
        crate::criteria::Criterion::Mode3 => SamplerMode::WithoutReplacement,
        _ => SamplerMode::WithReplacement,
    }
}

/// Fixed samples for one batch: shared unless the mode requires per-pair
/// sets, in which case one set per target.
enum Drawn {
    Shared(SampleSet),
    PerPair(Vec<SampleSet>, Vec<usize>),
}

impl Drawn {
    fn draw(
        sampler: &Sampler,
        targets: &[usize],
        shared: bool,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        if shared && sampler.mode() != SamplerMode::ExcludeTarget {
            return Ok(Drawn::Shared(sampler.shared_batch_samples(rng)?));
        }
        let sets: Vec<SampleSet> = targets
            .iter()
            .map(|&t| sampler.draw_for_target(t, rng))
            .collect::<Result<_>>()?;
        let ids = sets
            .iter()
            .flat_map(|s| s.samples().iter().copied())
            .collect();
        Ok(Drawn::PerPair(sets, ids))
    }

    fn candidates(&self, k: usize) -> Candidates<'_> {
        match self {
            Drawn::Shared(s) => Candidates::Shared(s.samples()),
            Drawn::PerPair(_, ids) => Candidates::PerPair { ids, width: k },
        }
    }

    fn view(&self) -> SampleView<'_> {
        match self {
            Drawn::Shared(s) => SampleView::Shared(s),
            Drawn::PerPair(sets, _) => SampleView::PerPair(sets),
        }
    }
}

/// A random instance of a criterion with frozen samples.
struct Instance {
    kind: CriterionKind,
    num_classes: usize,
    targets: Vec<usize>,
    sampler: Option<Sampler>,
    drawn: Option<Drawn>,
}

impl Instance {
    fn random(
        kind: CriterionKind,
        max_classes: usize,
        max_k: usize,
        batch: usize,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        let num_classes = rng.random_range(3..=max_classes);
        let targets: Vec<usize> = (0..batch)
            .map(|_| rng.random_range(0..num_classes))
            .collect();
        if !kind.criterion().is_sampled() {
            return Ok(Instance {
                kind,
                num_classes,
                targets,
                sampler: None,
                drawn: None,
            });
        }
        let mode = default_mode(kind);
        let k_cap = if mode == SamplerMode::WithoutReplacement {
            num_classes - 1
        } else {
            max_k
        };
        let k = rng.random_range(1..=k_cap.min(max_k));
        let dist = NoiseDistribution::log_uniform(num_classes)?;
        let sampler = Sampler::new(dist, mode, k)?;
        let shared = rng.random_bool(0.5);
        let drawn = Drawn::draw(&sampler, &targets, shared, rng)?;
        Ok(Instance {
            kind,
            num_classes,
            targets,
            sampler: Some(sampler),
            drawn: Some(drawn),
        })
    }

    fn width(&self) -> usize {
        match &self.sampler {
            Some(s) => s.k(),
            None => self.num_classes,
        }
    }

    fn target_counts(&self) -> Vec<f64> {
        match &self.sampler {
            Some(s) => self.targets.iter().map(|&t| s.expected_count(t)).collect(),
            None => Vec::new(),
        }
    }

    /// Criterion value from target scores (`B`) and candidate scores
    /// (`B x width`).
    fn evaluate(&self, target_scores: &[f64], candidate_scores: &[f64]) -> Result<LossResult> {
        match &self.drawn {
            None => evaluate_full(self.kind, candidate_scores, self.num_classes, &self.targets),
            Some(drawn) => {
                let counts = self.target_counts();
                let input = SampledScores {
                    targets: &self.targets,
                    target_scores,
                    sample_scores: candidate_scores,
                    samples: drawn.view(),
                };
                evaluate_sampled(self.kind, &input, Some(&counts))
            }
        }
    }
}

/// Largest relative error between analytic and numeric `dF/ds` over
/// `instances` random instances with `C <= 16` and `K <= 8`.
pub fn score_gradient_error(
    kind: CriterionKind,
    instances: usize,
    rng: &mut StreamRng,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let batch = rng.random_range(1..=4);
        let inst = Instance::random(kind, 16, 8, batch, rng)?;
        let width = inst.width();
        let mut target_scores: Vec<f64> = (0..batch).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut cand_scores: Vec<f64> = (0..batch * width)
            .map(|_| rng.random_range(-3.0..3.0))
            .collect();
        let full = inst.drawn.is_none();
        let r = inst.evaluate(&target_scores, &cand_scores)?;
        // Target and candidate scores are independent inputs here, so each
        // position is perturbed on its own.
        if !full {
            for i in 0..batch {
                let orig = target_scores[i];
                target_scores[i] = orig + FD_STEP;
                let up = inst.evaluate(&target_scores, &cand_scores)?.loss;
                target_scores[i] = orig - FD_STEP;
                let down = inst.evaluate(&target_scores, &cand_scores)?.loss;
                target_scores[i] = orig;
                worst = worst.max(relative_error(
                    r.target_grads[i],
                    (up - down) / (2.0 * FD_STEP),
                ));
            }
        }
        for i in 0..batch * width {
            let orig = cand_scores[i];
            cand_scores[i] = orig + FD_STEP;
            let up = inst.evaluate(&target_scores, &cand_scores)?.loss;
            cand_scores[i] = orig - FD_STEP;
            let down = inst.evaluate(&target_scores, &cand_scores)?.loss;
            cand_scores[i] = orig;
            worst = worst.max(relative_error(
                r.sample_grads[i],
                (up - down) / (2.0 * FD_STEP),
            ));
        }
    }
    Ok(worst)
}

/// Shape of the random models used by [`model_gradient_error`].
#[derive(Clone, Copy, Debug)]
pub struct ModelShape {
    pub vocab_size: usize,
    pub dim: usize,
    pub order: usize,
    pub k: usize,
    pub batch: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape {
            vocab_size: 12,
            dim: 8,
            order: 2,
            k: 4,
            batch: 3,
        }
    }
}

fn objective(params: &ModelParams, batch: &Batch, inst: &Instance) -> Result<LossResult> {
    let hidden = params.forward_hidden(batch);
    let targets = params.score_candidates(
        &hidden,
        Candidates::PerPair {
            ids: &batch.targets,
            width: 1,
        },
    );
    let candidates = match &inst.drawn {
        Some(d) => d.candidates(inst.width()),
        None => Candidates::All,
    };
    let scores = params.score_candidates(&hidden, candidates);
    inst.evaluate(&targets, &scores)
}

/// Largest relative error between `backward` and central differences of
/// the criterion with respect to every model parameter, over `instances`
/// random models.
pub fn model_gradient_error(
    kind: CriterionKind,
    shape: ModelShape,
    instances: usize,
    rng: &mut StreamRng,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let combiner = if i % 2 == 0 {
            Combiner::Positional
        } else {
            Combiner::Average
        };
        let c = shape.vocab_size;
        let mut params = ModelParams::init(c, shape.dim, shape.order, combiner, 0.5, rng)?;
        for w in params.context_weights.iter_mut() {
            *w += rng.random_range(-0.3..0.3);
        }
        for b in params.output_bias.iter_mut() {
            *b = rng.random_range(-1.0..1.0);
        }
        let batch = Batch {
            histories: (0..shape.batch * shape.order)
                .map(|_| rng.random_range(0..c))
                .collect(),
            targets: (0..shape.batch).map(|_| rng.random_range(0..c)).collect(),
            order: shape.order,
        };
        let inst = if kind.criterion().is_sampled() {
            let mode = default_mode(kind);
            let sampler = Sampler::new(NoiseDistribution::log_uniform(c)?, mode, shape.k)?;
            let drawn = Drawn::draw(&sampler, &batch.targets, i % 3 != 0, rng)?;
            Instance {
                kind,
                num_classes: c,
                targets: batch.targets.clone(),
                sampler: Some(sampler),
                drawn: Some(drawn),
            }
        } else {
            Instance {
                kind,
                num_classes: c,
                targets: batch.targets.clone(),
                sampler: None,
                drawn: None,
            }
        };
        let r = objective(&params, &batch, &inst)?;
        let hidden = params.forward_hidden(&batch);
        let candidates = match &inst.drawn {
            Some(d) => d.candidates(inst.width()),
            None => Candidates::All,
        };
        let analytic = params
            .backward(
                &batch,
                &hidden,
                &r.target_grads,
                candidates,
                &r.sample_grads,
            )
            .to_dense(&params);

        let mut idx = 0;
        let blocks: [fn(&mut ModelParams) -> &mut Vec<f64>; 4] = [
            |q| &mut q.input_embeddings,
            |q| &mut q.context_weights,
            |q| &mut q.output_embeddings,
            |q| &mut q.output_bias,
        ];
        for block in blocks {
            for j in 0..block(&mut params).len() {
                let orig = block(&mut params)[j];
                block(&mut params)[j] = orig + FD_STEP;
                let up = objective(&params, &batch, &inst)?.loss;
                block(&mut params)[j] = orig - FD_STEP;
                let down = objective(&params, &batch, &inst)?.loss;
                block(&mut params)[j] = orig;
                worst = worst.max(relative_error(analytic[idx], (up - down) / (2.0 * FD_STEP)));
                idx += 1;
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::Criterion;
    use crate::rng::{self, Purpose};

    #[test]
    fn every_criterion_passes_both_levels() {
        for c in Criterion::ALL {
            let kind = CriterionKind::with_default_link(c);
            let mut rng = rng::stream(5, Purpose::GradCheck, 0, 0);
            let e = score_gradient_error(kind, 10, &mut rng).unwrap();
            assert!(e < 1e-6, "{c}: score-level error {e}");
            let e = model_gradient_error(kind, ModelShape::default(), 2, &mut rng).unwrap();
            assert!(e < 1e-5, "{c}: model-level error {e}");
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(0.0, 1e-9) - 1e-5).abs() < 1e-15);
    }
}
