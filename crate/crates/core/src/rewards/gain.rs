use num_rational::Ratio;
use serde::{Deserialize, Serialize};

/// Outcome of one question under the base system and the system with recovery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedRun {
    pub s1: bool,
    pub s2: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegenerateStratum {
    /// No base failures, so the recovery rate is undefined (reported as 0).
    NoFailures,
    /// No base successes, so the regression rate is undefined (reported as 0).
    NoSuccesses,
}

/// Exact frequencies over a paired sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GainEstimate {
    pub n: u64,
    pub p_success1: Ratio<u64>,
    pub p_rec_given_fail: Ratio<u64>,
    pub p_reg_given_success: Ratio<u64>,
    pub predicted_success2: Ratio<u64>,
    pub observed_success2: Ratio<u64>,
    pub degenerate: Vec<DegenerateStratum>,
}

fn as_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl GainEstimate {
    pub fn predicted_f64(&self) -> f64 {
        as_f64(self.predicted_success2)
    }

    pub fn observed_f64(&self) -> f64 {
        as_f64(self.observed_success2)
    }

    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "p_success1": as_f64(self.p_success1),
            "p_rec_given_fail": as_f64(self.p_rec_given_fail),
            "p_reg_given_success": as_f64(self.p_reg_given_success),
            "predicted_success2": as_f64(self.predicted_success2),
            "observed_success2": as_f64(self.observed_success2),
            "degenerate": self.degenerate,
        })
    }
}

/// Predicted success of the recovering system from base success, recovery and regression
/// rates. Returns `None` for an empty sample.
pub fn gain_decomposition(runs: &[PairedRun]) -> Option<GainEstimate> {
    if runs.is_empty() {
        return None;
    }
    let n = runs.len() as u64;
    let count = |f: &dyn Fn(&PairedRun) -> bool| runs.iter().filter(|r| f(r)).count() as u64;
    let succ1 = count(&|r| r.s1);
    let fail1 = n - succ1;
    let recovered = count(&|r| !r.s1 && r.s2);
    let regressed = count(&|r| r.s1 && !r.s2);
    let succ2 = count(&|r| r.s2);

    let mut degenerate = Vec::new();
    let zero = Ratio::from_integer(0);
    let rate = |num: u64, den: u64| if den == 0 { zero } else { Ratio::new(num, den) };
    if fail1 == 0 {
        degenerate.push(DegenerateStratum::NoFailures);
    }
    if succ1 == 0 {
        degenerate.push(DegenerateStratum::NoSuccesses);
    }
    let p1 = Ratio::new(succ1, n);
    let rec = rate(recovered, fail1);
    let reg = rate(regressed, succ1);
    let one = Ratio::from_integer(1);
    // p1 + (1 - p1)·rec - p1·reg, ordered to stay non-negative in unsigned arithmetic
    let predicted = p1 + (one - p1) * rec - p1 * reg;
    Some(GainEstimate {
        n,
        p_success1: p1,
        p_rec_given_fail: rec,
        p_reg_given_success: reg,
        predicted_success2: predicted,
        observed_success2: Ratio::new(succ2, n),
        degenerate,
    })
}
