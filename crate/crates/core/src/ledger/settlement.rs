//! Conversion of reward scores into integer payouts.
//!
//! Each revealed worker gets its deposit back, adjusted by its score's
//! distance from the mean score of revealed workers:
//!
//! ```text
//! delta_i = floor(s * (score_i - mean(score)))
//! V_i     = max(0, D_i + delta_i)
//! ```
//!
//! Adjustments sum to at most zero before clamping. A clamped worker cannot
//! cover its whole loss, so the positive adjustments are scaled down to what
//! the losers actually paid in. The payout total therefore never exceeds the
//! deposits of revealed workers; dust and slashed deposits stay in the pool.

/// Payouts for revealed workers, in the same order as `deposits`.
pub fn settle_payouts(deposits: &[u64], scores: &[f64], scale: f64) -> Vec<u64> {
    assert_eq!(deposits.len(), scores.len());
    if scores.is_empty() {
        return Vec::new();
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let deltas: Vec<i128> = scores.iter().map(|s| (scale * (s - mean)).floor() as i128).collect();

    // What each loser actually pays in, capped at its deposit.
    let losses: Vec<i128> =
        deposits.iter().zip(&deltas).map(|(&d, &delta)| (-delta).clamp(0, d as i128)).collect();
    let gains: Vec<i128> = deltas.iter().map(|&delta| delta.max(0)).collect();
    let collected: i128 = losses.iter().sum();
    let owed: i128 = gains.iter().sum();

    deposits
        .iter()
        .zip(losses.iter().zip(&gains))
        .map(|(&d, (&loss, &gain))| {
            let paid_gain = if owed > collected { gain * collected / owed } else { gain };
            (d as i128 - loss + paid_gain) as u64
        })
        .collect()
}
