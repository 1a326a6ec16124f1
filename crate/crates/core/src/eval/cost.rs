use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{EvalReport, Granularity};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageEntry {
    pub instance_id: String,
    pub prompt_tokens: u64,
    pub output_tokens: u64,
    pub calls: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageLedger {
    pub entries: Vec<UsageEntry>,
}

impl UsageLedger {
    /// Adds usage for an instance, merging with an existing entry.
    pub fn record(&mut self, instance_id: &str, prompt_tokens: u64, output_tokens: u64, calls: u64) {
        match self.entries.iter_mut().find(|e| e.instance_id == instance_id) {
            Some(e) => {
                e.prompt_tokens += prompt_tokens;
                e.output_tokens += output_tokens;
                e.calls += calls;
            }
            None => self.entries.push(UsageEntry {
                instance_id: instance_id.to_string(),
                prompt_tokens,
                output_tokens,
                calls,
            }),
        }
    }

    pub fn total_prompt_tokens(&self) -> u64 {
        self.entries.iter().map(|e| e.prompt_tokens).sum()
    }

    pub fn total_output_tokens(&self) -> u64 {
        self.entries.iter().map(|e| e.output_tokens).sum()
    }

    pub fn total_calls(&self) -> u64 {
        self.entries.iter().map(|e| e.calls).sum()
    }
}

/// Dollars per token.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prices {
    pub input_per_token: f64,
    pub output_per_token: f64,
}

impl Prices {
    pub fn validate(&self) -> Result<()> {
        if !(self.input_per_token >= 0.0 && self.output_per_token >= 0.0)
            || !self.input_per_token.is_finite()
            || !self.output_per_token.is_finite()
        {
            return Err(Error::Config(format!("prices must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }

    pub fn cost(&self, prompt_tokens: u64, output_tokens: u64) -> f64 {
        prompt_tokens as f64 * self.input_per_token + output_tokens as f64 * self.output_per_token
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceCost {
    pub instance_id: String,
    pub prompt_tokens: u64,
    pub output_tokens: u64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub prices: Prices,
    pub per_instance: Vec<InstanceCost>,
    pub total_prompt_tokens: u64,
    pub total_output_tokens: u64,
    pub total_calls: u64,
    pub mean_prompt_tokens: f64,
    pub mean_output_tokens: f64,
    pub mean_cost: f64,
    /// Function Acc@10 (percent) divided by mean cost per instance.
    pub acc10_per_dollar: Option<f64>,
}

pub fn cost_report(ledger: &UsageLedger, prices: &Prices, report: Option<&EvalReport>) -> Result<CostReport> {
    prices.validate()?;
    let per_instance: Vec<InstanceCost> = ledger
        .entries
        .iter()
        .map(|e| InstanceCost {
            instance_id: e.instance_id.clone(),
            prompt_tokens: e.prompt_tokens,
            output_tokens: e.output_tokens,
            cost: prices.cost(e.prompt_tokens, e.output_tokens),
        })
        .collect();
    let n = per_instance.len().max(1) as f64;
    let mean_cost = per_instance.iter().map(|c| c.cost).sum::<f64>() / n;
    let acc10 = report.and_then(|r| r.table.get(&Granularity::Function)?.get(&10).copied());
    Ok(CostReport {
        prices: *prices,
        total_prompt_tokens: ledger.total_prompt_tokens(),
        total_output_tokens: ledger.total_output_tokens(),
        total_calls: ledger.total_calls(),
        mean_prompt_tokens: ledger.total_prompt_tokens() as f64 / n,
        mean_output_tokens: ledger.total_output_tokens() as f64 / n,
        acc10_per_dollar: acc10.filter(|_| mean_cost > 0.0).map(|a| a / mean_cost),
        mean_cost,
        per_instance,
    })
}
