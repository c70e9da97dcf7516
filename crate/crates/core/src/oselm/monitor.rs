use serde::{Deserialize, Serialize};

use super::{OselmModel, Phase};
use crate::error::{Error, Result};

/// Relative change of `beta`, in percent, below which an update counts as settled.
pub const CONVERGENCE_TC_PERCENT: f64 = 0.1;
/// Consecutive settled updates required to declare convergence.
pub const CONVERGENCE_WINDOW: usize = 10;

/// Declares convergence once `%dbeta < Tc` holds for `window` consecutive updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceMonitor {
    pub tc_percent: f64,
    pub window: usize,
    pub consecutive: usize,
    /// Samples consumed (init batch included) when convergence fired.
    pub converged_at: Option<usize>,
}

impl Default for ConvergenceMonitor {
    fn default() -> Self {
        Self {
            tc_percent: CONVERGENCE_TC_PERCENT,
            window: CONVERGENCE_WINDOW,
            consecutive: 0,
            converged_at: None,
        }
    }
}

impl ConvergenceMonitor {
    /// Feeds one `%dbeta`. Returns true on the update that completes the window.
    pub fn push(&mut self, delta_percent: f64, sample_count: usize) -> bool {
        if self.converged_at.is_some() {
            return false;
        }
        if delta_percent < self.tc_percent {
            self.consecutive += 1;
        } else {
            self.consecutive = 0;
        }
        if self.consecutive >= self.window {
            self.converged_at = Some(sample_count);
            return true;
        }
        false
    }

    pub fn is_converged(&self) -> bool {
        self.converged_at.is_some()
    }
}

/// Records `delta_percent` and, on convergence, moves `model` into inference.
pub fn observe(
    model: &mut OselmModel,
    monitor: &mut ConvergenceMonitor,
    delta_percent: f64,
) -> Result<bool> {
    if model.phase() != Phase::OnlineTraining {
        return Err(Error::Phase {
            op: "observe",
            phase: model.phase(),
        });
    }
    let fired = monitor.push(delta_percent, model.samples_seen());
    if fired {
        model.enter_inference()?;
    }
    Ok(fired)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_small_deltas_converge() {
        let mut m = ConvergenceMonitor::default();
        for i in 0..9 {
            assert!(!m.push(0.05, 11 + i));
        }
        assert!(m.push(0.05, 20));
        assert_eq!(m.converged_at, Some(20));
    }

    #[test]
    fn excursion_resets() {
        let mut m = ConvergenceMonitor::default();
        for i in 0..9 {
            m.push(0.05, i);
        }
        assert!(!m.push(0.5, 9));
        assert_eq!(m.consecutive, 0);
        assert!(!m.is_converged());
        // Threshold is strict.
        m.push(0.1, 10);
        assert_eq!(m.consecutive, 0);
        m.push(f64::INFINITY, 11);
        assert_eq!(m.consecutive, 0);
    }

    #[test]
    fn observe_switches_phase() {
        let mut model = OselmModel::init_random(2, 3, 1.0, 0).unwrap();
        let mut mon = ConvergenceMonitor::default();
        assert!(observe(&mut model, &mut mon, 0.0).is_err());
        model.init_batch(&vec![vec![0.1, 0.2]; 10]).unwrap();
        for _ in 0..9 {
            assert!(!observe(&mut model, &mut mon, 0.01).unwrap());
        }
        assert!(observe(&mut model, &mut mon, 0.01).unwrap());
        assert_eq!(model.phase(), Phase::Inference);
        assert!(observe(&mut model, &mut mon, 0.01).is_err());
    }
}
