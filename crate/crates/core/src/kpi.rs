//! Time-averaged and accumulated performance indicators computed from slot traces.

use serde::{Deserialize, Serialize};

use crate::dqn::Trace;
use crate::error::{Error, Result};

fn nonempty(trace: &Trace) -> Result<()> {
    if trace.records.is_empty() {
        Err(Error::Empty("empty trace"))
    } else {
        Ok(())
    }
}

/// `(1/T) Σ_t (1/D) Σ_d A_d(t)`.
pub fn ergodic_age(trace: &Trace) -> Result<f64> {
    nonempty(trace)?;
    Ok(trace.records.iter().map(|r| r.mean_aoi).sum::<f64>() / trace.records.len() as f64)
}

/// Time average of the per-slot mean normalized transmit power.
pub fn ergodic_power(trace: &Trace) -> Result<f64> {
    nonempty(trace)?;
    Ok(trace.records.iter().map(|r| r.mean_power).sum::<f64>() / trace.records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Regret,
    Reward,
}

pub fn prefix_sums(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(0.0, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Running sum of a per-slot field.
pub fn accumulative(trace: &Trace, field: Field) -> Result<Vec<f64>> {
    nonempty(trace)?;
    let values: Vec<f64> = trace
        .records
        .iter()
        .map(|r| match field {
            Field::Regret => r.regret as f64,
            Field::Reward => r.reward,
        })
        .collect();
    Ok(prefix_sums(&values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiSummary {
    pub slots: usize,
    pub ergodic_age: f64,
    pub ergodic_power: f64,
    pub accumulated_regret: f64,
    pub accumulated_reward: f64,
}

impl KpiSummary {
    pub fn from_trace(trace: &Trace) -> Result<Self> {
        Ok(Self {
            slots: trace.records.len(),
            ergodic_age: ergodic_age(trace)?,
            ergodic_power: ergodic_power(trace)?,
            accumulated_regret: *accumulative(trace, Field::Regret)?.last().expect("nonempty"),
            accumulated_reward: *accumulative(trace, Field::Reward)?.last().expect("nonempty"),
        })
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median and mean of each indicator across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub name: String,
    pub seeds: usize,
    pub median: KpiSummary,
    pub mean: KpiSummary,
}

fn aggregate_with(runs: &[KpiSummary], f: fn(&[f64]) -> f64) -> KpiSummary {
    let col = |g: fn(&KpiSummary) -> f64| f(&runs.iter().map(g).collect::<Vec<_>>());
    KpiSummary {
        slots: runs[0].slots,
        ergodic_age: col(|k| k.ergodic_age),
        ergodic_power: col(|k| k.ergodic_power),
        accumulated_regret: col(|k| k.accumulated_regret),
        accumulated_reward: col(|k| k.accumulated_reward),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub aggregate: Aggregate,
    /// Median minus the baseline's median, per indicator.
    pub delta: KpiSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

/// Aligns several named runs (one summary per seed) against `baseline`.
pub fn compare(runs: &[(String, Vec<KpiSummary>)], baseline: &str) -> Result<Comparison> {
    if runs.len() < 2 {
        return Err(Error::Config("a comparison needs at least two runs".into()));
    }
    let horizon = runs
        .iter()
        .flat_map(|(_, v)| v.first())
        .map(|k| k.slots)
        .next()
        .ok_or(Error::Empty("runs without any seeds"))?;
    for (name, v) in runs {
        if v.is_empty() {
            return Err(Error::Config(format!("run {name} has no seeds")));
        }
        for k in v {
            if k.slots != horizon {
                return Err(Error::LengthMismatch {
                    left: horizon,
                    right: k.slots,
                });
            }
        }
    }
    let aggregates: Vec<Aggregate> = runs
        .iter()
        .map(|(name, v)| Aggregate {
            name: name.clone(),
            seeds: v.len(),
            median: aggregate_with(v, median),
            mean: aggregate_with(v, mean),
        })
        .collect();
    let base = aggregates
        .iter()
        .find(|a| a.name == baseline)
        .ok_or_else(|| Error::Config(format!("baseline {baseline} not among the runs")))?
        .median;
    let rows = aggregates
        .into_iter()
        .map(|a| {
            let m = a.median;
            ComparisonRow {
                delta: KpiSummary {
                    slots: m.slots,
                    ergodic_age: m.ergodic_age - base.ergodic_age,
                    ergodic_power: m.ergodic_power - base.ergodic_power,
                    accumulated_regret: m.accumulated_regret - base.accumulated_regret,
                    accumulated_reward: m.accumulated_reward - base.accumulated_reward,
                },
                aggregate: a,
            }
        })
        .collect();
    Ok(Comparison {
        baseline: baseline.to_string(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_examples() {
        assert_eq!(prefix_sums(&[1.0, 0.0, 1.0]), vec![1.0, 1.0, 2.0]);
        assert_eq!(prefix_sums(&[0.0; 3]), vec![0.0; 3]);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn identical_runs_have_zero_deltas() {
        let k = KpiSummary {
            slots: 10,
            ergodic_age: 3.0,
            ergodic_power: 0.2,
            accumulated_regret: 4.0,
            accumulated_reward: -50.0,
        };
        let runs = vec![("a".to_string(), vec![k]), ("b".to_string(), vec![k])];
        let c = compare(&runs, "a").unwrap();
        for r in &c.rows {
            assert_eq!(r.delta.ergodic_age, 0.0);
            assert_eq!(r.delta.accumulated_reward, 0.0);
        }
        let short = KpiSummary { slots: 9, ..k };
        assert!(compare(&[("a".into(), vec![k]), ("b".into(), vec![short])], "a").is_err());
    }
}
