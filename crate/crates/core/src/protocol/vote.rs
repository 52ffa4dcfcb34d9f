use crate::error::{Error, Result};

/// Modal bit of an odd-length outcome list.
pub fn majority_vote(outcomes: &[u8]) -> Result<u8> {
    if outcomes.len().is_multiple_of(2) {
        return Err(Error::InvalidVote(format!(
            "majority vote needs an odd number of outcomes, got {}",
            outcomes.len()
        )));
    }
    if let Some(b) = outcomes.iter().find(|&&b| b > 1) {
        return Err(Error::InvalidVote(format!("outcome {b} is not a bit")));
    }
    let ones = outcomes.iter().filter(|&&b| b == 1).count();
    Ok(u8::from(2 * ones > outcomes.len()))
}

/// Probability that an order-`n` vote is wrong when each outcome is
/// independently wrong with probability `p`.
pub fn analytic_vote_error(p: f64, n: usize) -> Result<f64> {
    if n.is_multiple_of(2) {
        return Err(Error::InvalidVote(format!("vote order {n} is not odd")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidVote(format!("error probability {p} is outside [0, 1]")));
    }
    let mut binom = 1.0f64;
    let mut total = 0.0;
    for k in 0..=n {
        if k > 0 {
            binom *= (n - k + 1) as f64 / k as f64;
        }
        if 2 * k > n {
            total += binom * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn votes() {
        assert_eq!(majority_vote(&[0, 0, 0]).unwrap(), 0);
        assert_eq!(majority_vote(&[1, 0, 1]).unwrap(), 1);
        assert_eq!(majority_vote(&[1]).unwrap(), 1);
        assert!(majority_vote(&[]).is_err());
        assert!(majority_vote(&[1, 0]).is_err());
        assert!(majority_vote(&[2]).is_err());
    }

    #[test]
    fn tail_values() {
        assert_eq!(analytic_vote_error(0.2, 1).unwrap(), 0.2);
        assert!((analytic_vote_error(0.1, 3).unwrap() - 0.028).abs() < 1e-15);
        for n in [1, 3, 5, 7] {
            assert!((analytic_vote_error(0.5, n).unwrap() - 0.5).abs() < 1e-14);
        }
        assert!(analytic_vote_error(0.1, 2).is_err());
        assert!(analytic_vote_error(1.1, 3).is_err());
    }
}
