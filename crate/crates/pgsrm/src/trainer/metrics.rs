//! Metrics persistence: the CSV series is the source of truth for a run.

use crate::ppo::UpdateMetrics;
use crate::trainer::TrainerError;

/// Pinned column order.
pub const CSV_HEADER: &str = "step,mean_reward,entropy,kl,policy_loss,value_loss,kl_coeff,grad_norm";

pub fn csv_row(m: &UpdateMetrics) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        m.step,
        m.mean_reward,
        m.entropy,
        m.kl,
        m.policy_loss,
        m.value_loss,
        m.kl_coeff,
        m.pre_clip_grad_norm
    )
}

pub fn to_csv(series: &[UpdateMetrics]) -> String {
    let mut out = String::with_capacity(series.len() * 64 + CSV_HEADER.len() + 1);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for m in series {
        out.push_str(&csv_row(m));
        out.push('\n');
    }
    out
}

pub fn parse_csv(content: &str) -> Result<Vec<UpdateMetrics>, TrainerError> {
    let mut lines = content.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(TrainerError::Metrics(format!(
                "unexpected CSV header: {other:?}"
            )))
        }
    }
    let mut series = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(TrainerError::Metrics(format!(
                "row {}: expected 8 fields, got {}",
                i + 2,
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f32, TrainerError> {
            s.parse::<f32>()
                .map_err(|_| TrainerError::Metrics(format!("row {}: bad number '{s}'", i + 2)))
        };
        series.push(UpdateMetrics {
            step: fields[0]
                .parse::<usize>()
                .map_err(|_| TrainerError::Metrics(format!("row {}: bad step", i + 2)))?,
            mean_reward: num(fields[1])?,
            entropy: num(fields[2])?,
            kl: num(fields[3])?,
            policy_loss: num(fields[4])?,
            value_loss: num(fields[5])?,
            kl_coeff: num(fields[6])?,
            pre_clip_grad_norm: num(fields[7])?,
        });
    }
    Ok(series)
}

/// Mean of a metric over the series window `[from, to)`.
pub fn window_mean(series: &[UpdateMetrics], from: usize, to: usize, f: impl Fn(&UpdateMetrics) -> f32) -> f64 {
    let to = to.min(series.len());
    if from >= to {
        return f64::NAN;
    }
    let sum: f64 = series[from..to].iter().map(|m| f(m) as f64).sum();
    sum / (to - from) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(step: usize) -> UpdateMetrics {
        UpdateMetrics {
            step,
            mean_reward: 0.25 + step as f32 * 0.1,
            policy_loss: -0.5,
            value_loss: 0.125,
            entropy: 3.0,
            kl: 0.001,
            kl_coeff: 5e-5,
            pre_clip_grad_norm: 1.75,
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let series: Vec<UpdateMetrics> = (1..=5).map(sample).collect();
        let text = to_csv(&series);
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed.len(), 5);
        for (a, b) in series.iter().zip(&parsed) {
            assert_eq!(a.step, b.step);
            assert_eq!(a.mean_reward, b.mean_reward);
            assert_eq!(a.entropy, b.entropy);
            assert_eq!(a.kl, b.kl);
            assert_eq!(a.policy_loss, b.policy_loss);
            assert_eq!(a.value_loss, b.value_loss);
            assert_eq!(a.kl_coeff, b.kl_coeff);
            assert_eq!(a.pre_clip_grad_norm, b.pre_clip_grad_norm);
        }
        // Re-serialization reproduces the same bytes.
        assert_eq!(to_csv(&parsed), text);
    }

    #[test]
    fn header_is_pinned() {
        assert_eq!(
            CSV_HEADER,
            "step,mean_reward,entropy,kl,policy_loss,value_loss,kl_coeff,grad_norm"
        );
        assert!(parse_csv("bogus\n1,2,3").is_err());
    }

    #[test]
    fn window_means() {
        let series: Vec<UpdateMetrics> = (1..=10).map(sample).collect();
        let m = window_mean(&series, 0, 2, |m| m.mean_reward);
        assert!((m - (0.35 + 0.45) / 2.0).abs() < 1e-6);
    }
}
