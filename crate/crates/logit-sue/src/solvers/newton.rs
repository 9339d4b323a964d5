//! Inexact Newton steps on the fixed-point residual.
//!
//! Each attempt solves the reduced linear system matrix-free to a forcing
//! tolerance tied to the current residual norm, projects the trial point
//! back onto the feasible set when roundoff pushes a component barely
//! negative, and accepts only on sufficient residual decrease. A rejected
//! attempt costs work but never moves the iterate.

use crate::equilibrium::{Assignment, FlowState};
use crate::error::Result;
use crate::krylov::{gmres, GmresConfig};
use crate::operators::ReducedSystem;

#[derive(Debug, Clone)]
pub struct NewtonConfig {
    /// Cap on the forcing tolerance for the linear solve.
    pub eta_tol: f64,
    /// Sufficient-decrease fraction: accept when the new residual norm is
    /// at most `(1 - nu1)` times the old one.
    pub nu1: f64,
    /// Scale tying the forcing tolerance to the residual norm.
    pub nu2: f64,
    /// Gap levels that trigger an attempt the first time the gap crosses
    /// them, strictly decreasing.
    pub thresholds: Vec<f64>,
    pub gmres: GmresConfig,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            eta_tol: 1e-2,
            nu1: 1e-4,
            nu2: 1e3,
            thresholds: (3..=10).map(|e| 10f64.powi(-e)).collect(),
            gmres: GmresConfig::default(),
        }
    }
}

/// Outcome of one attempt. A rejection reports why and leaves the caller's
/// state untouched.
#[derive(Debug)]
pub enum NewtonOutcome {
    Accepted {
        state: FlowState,
        gmres_iterations: usize,
        forcing: f64,
    },
    Rejected {
        reason: String,
    },
}

pub fn newton_attempt(
    asg: &Assignment,
    state: &FlowState,
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome> {
    let f = state.residual();
    let fnorm = state.residual_norm();
    if fnorm == 0.0 {
        return Ok(NewtonOutcome::Rejected {
            reason: "residual is zero".into(),
        });
    }
    let forcing = cfg.eta_tol.min(cfg.nu2 * fnorm);
    let rs = ReducedSystem::new(asg, state);
    let gmres_cfg = GmresConfig {
        tol: forcing,
        ..cfg.gmres.clone()
    };
    let lin = gmres(|v| rs.apply_i_minus_k(v), &f, &gmres_cfg)?;

    let mut trial: Vec<f64> = state.h.iter().zip(&lin.solution).map(|(h, d)| h + d).collect();
    if let Err(reason) = snap_feasible(&mut trial, asg) {
        return Ok(NewtonOutcome::Rejected { reason });
    }
    let new_state = asg.evaluate(&trial);
    let new_norm = new_state.residual_norm();
    if new_norm <= (1.0 - cfg.nu1) * fnorm {
        Ok(NewtonOutcome::Accepted {
            state: new_state,
            gmres_iterations: lin.iterations,
            forcing,
        })
    } else {
        Ok(NewtonOutcome::Rejected {
            reason: format!(
                "insufficient decrease: {new_norm:.6e} after {fnorm:.6e}"
            ),
        })
    }
}

/// Zero components that are negative within a demand-scaled roundoff
/// tolerance, preserving each block sum by charging the zeroed mass to the
/// block's largest component. A component below the tolerance fails.
pub(crate) fn snap_feasible(trial: &mut [f64], asg: &Assignment) -> std::result::Result<(), String> {
    let offsets = asg.paths().od_offsets();
    let demands = asg.od_demands();
    for r in 0..demands.len() {
        let range = offsets[r]..offsets[r + 1];
        let tol = 1e-12 * demands[r].max(1.0);
        let mut deficit = 0.0;
        let mut largest = range.start;
        for i in range.clone() {
            if trial[i] < -tol {
                return Err(format!(
                    "trial flow {} on path {i} is below -{tol:.3e}",
                    trial[i]
                ));
            }
            if trial[i] < 0.0 {
                deficit += trial[i];
                trial[i] = 0.0;
            }
            if trial[largest] < trial[i] {
                largest = i;
            }
        }
        if deficit != 0.0 {
            trial[largest] += deficit;
            if trial[largest] < 0.0 {
                return Err(format!(
                    "block {r} cannot absorb a deficit of {deficit:.3e}"
                ));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::tests::braess_assignment;
    use approx::assert_relative_eq;

    #[test]
    fn braess_attempt_is_accepted_and_lands_near_the_fixed_point() {
        let asg = braess_assignment(1.0);
        let st = asg.evaluate(&[2.0, 2.0, 2.0]);
        let before = st.residual_norm();
        match newton_attempt(&asg, &st, &NewtonConfig::default()).unwrap() {
            NewtonOutcome::Accepted { state, forcing, .. } => {
                assert!(forcing <= 1e-2);
                let after = state.residual_norm();
                assert!(after <= 0.02, "residual {after}");
                assert!(after < (1.0 - 1e-4) * before);
                for (h, expect) in state.h.iter().zip([1.58, 1.58, 2.84]) {
                    assert!((h - expect).abs() < 0.01, "h {h} vs {expect}");
                }
                // Feasibility is preserved exactly.
                assert_relative_eq!(state.h.iter().sum::<f64>(), 6.0, max_relative = 1e-12);
            }
            NewtonOutcome::Rejected { reason } => panic!("rejected: {reason}"),
        }
    }

    #[test]
    fn impossible_decrease_demand_is_rejected() {
        let asg = braess_assignment(1.0);
        let st = asg.evaluate(&[2.0, 2.0, 2.0]);
        // One inexact step cannot shave the residual by a factor 1e4.
        let cfg = NewtonConfig {
            nu1: 0.9999,
            ..NewtonConfig::default()
        };
        assert!(matches!(
            newton_attempt(&asg, &st, &cfg).unwrap(),
            NewtonOutcome::Rejected { .. }
        ));
    }

    #[test]
    fn attempt_at_the_fixed_point_is_a_noop_rejection() {
        let asg = braess_assignment(1.0);
        let mut h = vec![2.0, 2.0, 2.0];
        for _ in 0..300 {
            let t = asg.logit_map(&h);
            for (hi, ti) in h.iter_mut().zip(&t) {
                *hi += 0.2 * (ti - *hi);
            }
        }
        let st = asg.evaluate(&h);
        // Not exactly zero, so the attempt runs; it must not blow up.
        match newton_attempt(&asg, &st, &NewtonConfig::default()).unwrap() {
            NewtonOutcome::Accepted { state, .. } => {
                assert!(state.residual_norm() <= st.residual_norm());
            }
            NewtonOutcome::Rejected { .. } => {}
        }
    }

    #[test]
    fn snap_zeroes_roundoff_negatives_and_preserves_sums() {
        let asg = braess_assignment(1.0);
        let mut trial = vec![-1e-13, 2.0 + 1e-13, 4.0];
        snap_feasible(&mut trial, &asg).unwrap();
        assert_eq!(trial[0], 0.0);
        assert_relative_eq!(trial.iter().sum::<f64>(), 6.0, epsilon = 1e-12);
        // The largest component absorbed the deficit.
        assert!((trial[2] - (4.0 - 1e-13)).abs() < 1e-15);
    }

    #[test]
    fn snap_rejects_a_real_negative() {
        let asg = braess_assignment(1.0);
        let mut trial = vec![-1e-6, 3.0, 3.0];
        assert!(snap_feasible(&mut trial, &asg).is_err());
    }

    #[test]
    fn snap_tolerance_scales_with_demand() {
        // Demand 6: tolerance 6e-12, so -3e-12 snaps instead of failing.
        let asg = braess_assignment(1.0);
        let mut trial = vec![-3e-12, 2.0, 4.0];
        snap_feasible(&mut trial, &asg).unwrap();
        assert_eq!(trial[0], 0.0);
    }
}
