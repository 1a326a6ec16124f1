use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TrainingTriple;
use crate::error::{Error, Result};

use super::{assign_identifiers, build_prompt, candidate_text, PromptBudget, RerankCandidate};

/// Supervision for the first generated identifier only. The target is not
/// followed by an end-of-sequence token, so the model keeps emitting full
/// rankings at inference time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerankTrainingExample {
    pub prompt_text: String,
    pub target_identifier: usize,
    pub suppress_end_token: bool,
}

/// `-log softmax(logits)[target]`; `logits[i]` belongs to identifier `i + 1`.
pub fn first_token_loss(identifier_logits: &[f64], target_identifier: usize) -> Result<f64> {
    if target_identifier == 0 || target_identifier > identifier_logits.len() {
        return Err(Error::InvalidInput(format!(
            "target identifier {target_identifier} outside 1..={}",
            identifier_logits.len()
        )));
    }
    if identifier_logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NumericInput("identifier logits must be finite".into()));
    }
    let target = identifier_logits[target_identifier - 1];
    let max = identifier_logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if target == max {
        // ln(1 + x) keeps full relative precision when the loss is tiny.
        let rest: f64 = identifier_logits
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != target_identifier - 1)
            .map(|(_, l)| (l - target).exp())
            .sum();
        return Ok(rest.ln_1p());
    }
    let sum: f64 = identifier_logits.iter().map(|l| (l - max).exp()).sum();
    Ok(max + sum.ln() - target)
}

/// Samples `window_size - 1` negatives, shuffles them with the positive,
/// and builds the budgeted prompt. Both random steps use `seed`.
pub fn build_training_example(
    triple: &TrainingTriple,
    seed: u64,
    budget: &PromptBudget,
    window_size: usize,
    instruction: &str,
) -> Result<RerankTrainingExample> {
    let need = window_size
        .checked_sub(1)
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config("window_size must be >= 2".into()))?;
    if triple.negatives.len() < need {
        return Err(Error::InvalidInput(format!(
            "triple {} has {} negatives, needs {need}",
            triple.instance_id,
            triple.negatives.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut units: Vec<_> = triple.negatives.choose_multiple(&mut rng, need).collect();
    units.push(&triple.positive);
    units.shuffle(&mut rng);

    let target_identifier = units
        .iter()
        .position(|u| u.unit_id == triple.positive.unit_id)
        .expect("positive is in the window")
        + 1;
    let candidates: Vec<RerankCandidate> = units
        .iter()
        .map(|u| RerankCandidate {
            unit_id: u.unit_id.clone(),
            text: candidate_text(u),
        })
        .collect();
    let window = assign_identifiers(&candidates, window_size)?;
    let prompt = build_prompt(&triple.query_text, &window, budget, instruction)?;
    Ok(RerankTrainingExample {
        prompt_text: prompt.text,
        target_identifier,
        suppress_end_token: true,
    })
}
