use serde::{Deserialize, Serialize};

/// Which difference the Aitken limit is compared with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AitkenForm {
    /// `l∞ - l^{(t+1)}`, the distance from the newest value to its extrapolated limit.
    Standard,
    /// `l∞ - l^{(t)}`, with the index as printed.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Stop,
    Continue,
}

/// Successive differences below this count as a plateau.
const PLATEAU: f64 = 1e-12;

pub fn aitken_stop(last3: [f64; 3], eps: f64) -> StopDecision {
    aitken_stop_with(last3, eps, AitkenForm::Standard)
}

/// Decision from `[l^{(t-1)}, l^{(t)}, l^{(t+1)}]`.
pub fn aitken_stop_with(last3: [f64; 3], eps: f64, form: AitkenForm) -> StopDecision {
    let [l0, l1, l2] = last3;
    let d1 = l1 - l0;
    let d2 = l2 - l1;
    if d1.abs() < PLATEAU && d2.abs() < PLATEAU {
        return StopDecision::Stop;
    }
    if d1 == 0.0 {
        return StopDecision::Continue;
    }
    let a = d2 / d1;
    if a == 1.0 || !a.is_finite() {
        return StopDecision::Continue;
    }
    let limit = l1 + d2 / (1.0 - a);
    let gap = match form {
        AitkenForm::Standard => limit - l2,
        AitkenForm::Literal => limit - l1,
    };
    if (0.0..eps).contains(&gap) {
        StopDecision::Stop
    } else {
        StopDecision::Continue
    }
}
