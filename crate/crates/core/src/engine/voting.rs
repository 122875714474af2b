//! Pruning-time detection: per-client votes, the first further-pruning round and the
//! geometric schedule of later pruning rounds.

use crate::config::TStarRule;
use crate::error::{invalid, Result};

/// Vote 1 when `|D_t - D_{t-1}| / |D_1| < delta_pr`, where `history = [D_1, ..., D_t]` and
/// `D_0 = 0`. A zero normaliser yields a 0 vote.
pub fn detection_vote(history: &[f64], delta_pr: f64) -> Result<u8> {
    let (&first, &last) = match (history.first(), history.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(invalid("detection score history is empty")),
    };
    if first == 0.0 {
        log::debug!("zero first-round detection score; vote 0");
        return Ok(0);
    }
    let previous = if history.len() >= 2 {
        history[history.len() - 2]
    } else {
        0.0
    };
    let ratio = (last - previous).abs() / first.abs();
    Ok(u8::from(ratio < delta_pr))
}

/// First round (1-based) whose mean vote satisfies the rule, if any.
pub fn compute_t_star(vote_fractions: &[f64], delta_v: f64, rule: TStarRule) -> Option<usize> {
    vote_fractions
        .iter()
        .position(|&f| match rule {
            TStarRule::Reaches => f >= delta_v,
            TStarRule::FallsBelow => f < delta_v,
        })
        .map(|i| i + 1)
}

/// `ceil(x)` that treats values within rounding noise of an integer as that integer.
fn robust_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Pruning rounds `{t_p : t_star < t_p < horizon}` with `t_p = sum_{tau <= p} I_tau` and
/// `I_tau = ceil((t_star + b) / c^(tau - 1))`.
pub fn pruning_schedule(t_star: usize, b: f64, c: f64, horizon: usize) -> Result<Vec<usize>> {
    if !(c.is_finite() && c > 0.0) {
        return Err(invalid(format!("c = {c} must be positive")));
    }
    if !(b.is_finite() && b >= 0.0) {
        return Err(invalid(format!("b = {b} must be non-negative")));
    }
    if t_star == 0 {
        return Err(invalid("t_star must be at least 1"));
    }
    let base = t_star as f64 + b;
    let mut rounds = Vec::new();
    let mut t = 0usize;
    let mut scale = 1.0f64;
    while t < horizon {
        let gap = robust_ceil(base / scale).max(1.0) as usize;
        t += gap;
        if t > t_star && t < horizon {
            rounds.push(t);
        }
        if gap > 1 || c < 1.0 {
            scale *= c;
        }
    }
    Ok(rounds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vote_examples() {
        assert_eq!(detection_vote(&[4.0, 4.04], 0.02).unwrap(), 1);
        assert_eq!(detection_vote(&[3.0, 5.0, 5.0], 0.01).unwrap(), 1);
        assert_eq!(detection_vote(&[2.5], 0.03).unwrap(), 0);
        assert_eq!(detection_vote(&[0.0, 1.0], 0.5).unwrap(), 0);
        assert!(detection_vote(&[], 0.5).is_err());
    }

    #[test]
    fn t_star_examples() {
        let f = [0.0, 0.1, 0.6, 0.8];
        assert_eq!(compute_t_star(&f, 0.5, TStarRule::Reaches), Some(3));
        assert_eq!(compute_t_star(&[0.0; 5], 0.5, TStarRule::Reaches), None);
        assert_eq!(compute_t_star(&[0.0, 0.2], 0.0, TStarRule::Reaches), Some(1));
        assert_eq!(compute_t_star(&f, 0.5, TStarRule::FallsBelow), Some(1));
    }

    #[test]
    fn constant_gap_progression() {
        assert_eq!(pruning_schedule(20, 0.0, 1.0, 100).unwrap(), vec![40, 60, 80]);
        assert_eq!(pruning_schedule(10, 5.0, 1.0, 50).unwrap(), vec![15, 30, 45]);
    }

    #[test]
    fn empty_window() {
        assert!(pruning_schedule(99, 0.0, 1.3, 100).unwrap().is_empty());
        assert!(pruning_schedule(5, 0.0, 0.0, 100).is_err());
    }

    #[test]
    fn exact_integer_gaps_are_not_bumped() {
        // 130 / 1.3 is 100 exactly, but not in floating point
        assert_eq!(pruning_schedule(130, 0.0, 1.3, 240).unwrap(), vec![230]);
    }

    #[test]
    fn shrinking_scale_grows_gaps() {
        assert_eq!(pruning_schedule(1, 0.0, 0.5, 20).unwrap(), vec![3, 7, 15]);
    }

    #[test]
    fn gaps_bottom_out_at_one() {
        let s = pruning_schedule(4, 0.0, 2.0, 12).unwrap();
        // gaps 4, 2, 1, 1, 1, 1 -> 4, 6, 7, 8, 9, 10, 11
        assert_eq!(s, vec![6, 7, 8, 9, 10, 11]);
    }
}
