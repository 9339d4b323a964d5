//! The logit assignment map and its fixed-point residual.
//!
//! An [`Assignment`] bundles a network, a demand table, a frozen path set,
//! and the dispersion parameter. The map sends path flows `h` to target
//! flows `L(h)`: load links, price them, price paths, take per-OD softmax
//! of negative scaled costs, scale by demand. Fixed points of `L` are the
//! stochastic user equilibria the solvers chase, and every solver measures
//! progress through the residual `L(h) - h` and the gap measures here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{DemandTable, Network};
use crate::pathset::{IncidenceMatrix, PathSet};

/// Smallest flow whose logarithm is taken directly; anything positive but
/// smaller is floored to this before the log.
const LOG_FLOOR: f64 = 1e-300;

/// Dispersion parameter of the route-choice model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitParams {
    theta: f64,
}

impl LogitParams {
    pub fn new(theta: f64) -> Result<Self> {
        if !theta.is_finite() || theta <= 0.0 {
            return Err(Error::Invalid(format!(
                "dispersion parameter must be finite and positive, got {theta}"
            )));
        }
        Ok(LogitParams { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// A network, demand table, path set, and dispersion parameter, checked for
/// mutual consistency once so the per-iteration kernels can skip the checks.
pub struct Assignment {
    net: Network,
    demand: DemandTable,
    paths: PathSet,
    incidence: IncidenceMatrix,
    params: LogitParams,
    od_demands: Vec<f64>,
}

/// Everything the solvers need about one flow vector, computed in a single
/// forward pass. `target` is the image `L(h)`.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub h: Vec<f64>,
    pub link_flows: Vec<f64>,
    pub link_costs: Vec<f64>,
    pub path_costs: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub target: Vec<f64>,
}

impl FlowState {
    /// Fixed-point residual `L(h) - h`.
    pub fn residual(&self) -> Vec<f64> {
        self.target.iter().zip(&self.h).map(|(t, h)| t - h).collect()
    }

    pub fn residual_norm(&self) -> f64 {
        self.target
            .iter()
            .zip(&self.h)
            .map(|(t, h)| (t - h) * (t - h))
            .sum::<f64>()
            .sqrt()
    }
}

/// Convergence measures of a flow state. Both share the same numerator, a
/// demand-weighted excess of generalized path costs over the per-OD minimum;
/// `rgap` normalizes by total generalized cost, `aec` by total demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapMeasures {
    pub rgap: f64,
    pub aec: f64,
}

impl Assignment {
    pub fn new(
        net: Network,
        demand: DemandTable,
        paths: PathSet,
        params: LogitParams,
    ) -> Result<Self> {
        paths.validate(&net, &demand)?;
        let incidence = IncidenceMatrix::from_path_set(&paths, net.n_links());
        let od_demands = demand.pairs.iter().map(|p| p.demand).collect();
        Ok(Assignment {
            net,
            demand,
            paths,
            incidence,
            params,
            od_demands,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn demand(&self) -> &DemandTable {
        &self.demand
    }

    pub fn paths(&self) -> &PathSet {
        &self.paths
    }

    pub fn incidence(&self) -> &IncidenceMatrix {
        &self.incidence
    }

    pub fn theta(&self) -> f64 {
        self.params.theta()
    }

    /// Demand of each OD block, in block order.
    pub fn od_demands(&self) -> &[f64] {
        &self.od_demands
    }

    pub fn n_paths(&self) -> usize {
        self.paths.n_paths()
    }

    /// Per-OD softmax of `-theta * cost`. Shifted by the block minimum so
    /// the largest exponent is exactly one; entries that still underflow are
    /// floored at the smallest positive normal and the block renormalized,
    /// so every probability is strictly positive and each block sums to one
    /// up to roundoff.
    pub fn probabilities(&self, path_costs: &[f64]) -> Vec<f64> {
        assert_eq!(path_costs.len(), self.n_paths(), "path cost vector length");
        let theta = self.params.theta();
        let tiny = f64::MIN_POSITIVE;
        let mut p = vec![0.0; path_costs.len()];
        for r in 0..self.paths.n_ods() {
            let range = self.paths.od_range(r);
            let min = path_costs[range.clone()]
                .iter()
                .fold(f64::INFINITY, |m, &c| m.min(c));
            let mut sum = 0.0;
            for i in range.clone() {
                let e = (-theta * (path_costs[i] - min)).exp();
                p[i] = e;
                sum += e;
            }
            let mut clamped = false;
            let mut clamped_sum = 0.0;
            for i in range.clone() {
                p[i] /= sum;
                if p[i] < tiny {
                    p[i] = tiny;
                    clamped = true;
                }
                clamped_sum += p[i];
            }
            if clamped {
                for i in range.clone() {
                    p[i] = (p[i] / clamped_sum).max(tiny);
                }
            }
        }
        p
    }

    /// Scale per-OD probabilities by block demand.
    pub fn target_flows(&self, probabilities: &[f64]) -> Vec<f64> {
        assert_eq!(probabilities.len(), self.n_paths(), "probability vector length");
        let mut t = vec![0.0; probabilities.len()];
        for r in 0..self.paths.n_ods() {
            let d = self.od_demands[r];
            for i in self.paths.od_range(r) {
                t[i] = d * probabilities[i];
            }
        }
        t
    }

    /// Full forward pass at `h`.
    pub fn evaluate(&self, h: &[f64]) -> FlowState {
        assert_eq!(h.len(), self.n_paths(), "flow vector length");
        let link_flows = self.incidence.link_flows(h);
        let link_costs = self.net.link_costs(&link_flows);
        let path_costs = self.incidence.path_totals(&link_costs);
        let probabilities = self.probabilities(&path_costs);
        let target = self.target_flows(&probabilities);
        FlowState {
            h: h.to_vec(),
            link_flows,
            link_costs,
            path_costs,
            probabilities,
            target,
        }
    }

    /// The assignment map alone.
    pub fn logit_map(&self, h: &[f64]) -> Vec<f64> {
        self.evaluate(h).target
    }

    /// Logit loading at free-flow costs, the standard starting point.
    pub fn initial_flows(&self) -> Vec<f64> {
        let path_costs = self.incidence.path_totals(&self.net.free_flow_costs());
        let p = self.probabilities(&path_costs);
        self.target_flows(&p)
    }

    /// Gap measures of a state. Generalized cost of a path is its travel
    /// cost plus the scaled log of its flow; every flow must be strictly
    /// positive.
    pub fn gap_measures(&self, state: &FlowState) -> Result<GapMeasures> {
        let theta = self.params.theta();
        let mut w = vec![0.0; self.n_paths()];
        for (i, (&h, &c)) in state.h.iter().zip(&state.path_costs).enumerate() {
            if !(h > 0.0) {
                return Err(Error::NonPositiveFlow { index: i, value: h });
            }
            w[i] = c + h.max(LOG_FLOOR).ln() / theta;
        }
        let mut numerator = 0.0;
        let mut weighted_cost = 0.0;
        for r in 0..self.paths.n_ods() {
            let range = self.paths.od_range(r);
            let w_min = w[range.clone()]
                .iter()
                .fold(f64::INFINITY, |m, &x| m.min(x));
            for i in range {
                numerator += state.h[i] * (w[i] - w_min);
                weighted_cost += state.h[i] * w[i].abs();
            }
        }
        if numerator == 0.0 {
            return Ok(GapMeasures { rgap: 0.0, aec: 0.0 });
        }
        Ok(GapMeasures {
            rgap: numerator / weighted_cost,
            aec: numerator / self.demand.total(),
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::network::{parse_net_file, parse_trips_file};
    use approx::assert_relative_eq;
    use std::path::PathBuf;

    fn data(name: &str) -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/tntp").join(name)
    }

    pub(crate) fn braess_assignment(theta: f64) -> Assignment {
        let net = parse_net_file(data("braess_net.tntp")).unwrap();
        let demand = parse_trips_file(data("braess_trips.tntp")).unwrap();
        // Outer route via node 2, outer route via node 3, crossing route.
        let ps = PathSet::from_paths(vec![vec![vec![0, 2], vec![1, 3], vec![0, 4, 3]]]).unwrap();
        Assignment::new(net, demand, ps, LogitParams::new(theta).unwrap()).unwrap()
    }

    pub(crate) fn two_link_assignment(theta: f64) -> Assignment {
        let net = parse_net_file(data("two_link_net.tntp")).unwrap();
        let demand = parse_trips_file(data("two_link_trips.tntp")).unwrap();
        let ps = PathSet::from_paths(vec![vec![vec![0], vec![1]]]).unwrap();
        Assignment::new(net, demand, ps, LogitParams::new(theta).unwrap()).unwrap()
    }

    #[test]
    fn braess_forward_pass_at_uniform_flow() {
        let asg = braess_assignment(1.0);
        let st = asg.evaluate(&[2.0, 2.0, 2.0]);
        assert_eq!(st.link_flows, vec![4.0, 2.0, 2.0, 4.0, 2.0]);
        assert_eq!(st.path_costs, vec![9.0, 9.0, 8.0]);
        // Unnormalized weights (1, 1, e).
        let e = std::f64::consts::E;
        let z = 2.0 + e;
        for (p, exp) in st.probabilities.iter().zip([1.0 / z, 1.0 / z, e / z]) {
            assert_relative_eq!(p, &exp, max_relative = 1e-14);
        }
        for (t, exp) in st.target.iter().zip([6.0 / z, 6.0 / z, 6.0 * e / z]) {
            assert_relative_eq!(t, &exp, max_relative = 1e-14);
        }
        // Residual (6/z - 2, 6/z - 2, 6e/z - 2) has block sum zero.
        assert_relative_eq!(st.residual_norm(), (2.0 - 6.0 / z) * 6.0f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn braess_costs_after_a_newton_sized_move() {
        let asg = braess_assignment(1.0);
        let st = asg.evaluate(&[1.58, 1.58, 2.84]);
        for (c, exp) in st.path_costs.iter().zip([9.42, 9.42, 8.84]) {
            assert_relative_eq!(c, &exp, max_relative = 1e-12);
        }
    }

    /// Root of x * (1 + exp(2x - 6)) = 4, the first-path flow at the
    /// two-link fixed point with unit dispersion.
    pub(crate) fn two_link_root() -> f64 {
        let g = |x: f64| x * (1.0 + (2.0 * x - 6.0).exp()) - 4.0;
        let (mut lo, mut hi) = (2.0, 3.0);
        assert!(g(lo) < 0.0 && g(hi) > 0.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn two_link_fixed_point_matches_scalar_root() {
        let asg = two_link_assignment(1.0);
        let h1 = two_link_root();
        assert_relative_eq!(h1, 2.6582, max_relative = 1e-4);
        let st = asg.evaluate(&[h1, 4.0 - h1]);
        assert!(st.residual_norm() < 1e-12, "residual {}", st.residual_norm());
        let gaps = asg.gap_measures(&st).unwrap();
        assert!(gaps.rgap < 1e-12, "rgap {}", gaps.rgap);
    }

    #[test]
    fn damped_iteration_reaches_the_two_link_fixed_point() {
        // The undamped map oscillates here (its slope at the fixed point is
        // about -1.78), so average with step one half.
        let asg = two_link_assignment(1.0);
        let mut h = asg.initial_flows();
        for _ in 0..200 {
            let target = asg.logit_map(&h);
            for (hi, ti) in h.iter_mut().zip(&target) {
                *hi += 0.5 * (ti - *hi);
            }
        }
        assert_relative_eq!(h[0], two_link_root(), max_relative = 1e-10);
    }

    #[test]
    fn gap_measures_match_hand_computation() {
        // Two-link state h = (3, 1): costs (3, 3), generalized costs
        // (3 + ln 3, 3), numerator 3 ln 3.
        let asg = two_link_assignment(1.0);
        let st = asg.evaluate(&[3.0, 1.0]);
        let gaps = asg.gap_measures(&st).unwrap();
        let ln3 = 3.0f64.ln();
        assert_relative_eq!(gaps.rgap, 3.0 * ln3 / (12.0 + 3.0 * ln3), max_relative = 1e-14);
        assert_relative_eq!(gaps.aec, 3.0 * ln3 / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn gap_rejects_nonpositive_flow() {
        let asg = two_link_assignment(1.0);
        let st = asg.evaluate(&[0.0, 4.0]);
        match asg.gap_measures(&st) {
            Err(Error::NonPositiveFlow { index: 0, .. }) => {}
            other => panic!("expected NonPositiveFlow, got {other:?}"),
        }
    }

    #[test]
    fn probabilities_are_shift_invariant_and_feasible() {
        let asg = braess_assignment(0.7);
        let costs = vec![3.0, 11.0, 7.5];
        let shifted: Vec<f64> = costs.iter().map(|c| c + 123.25).collect();
        let p = asg.probabilities(&costs);
        let q = asg.probabilities(&shifted);
        for (a, b) in p.iter().zip(&q) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, max_relative = 1e-14);
        let target = asg.target_flows(&p);
        assert_relative_eq!(target.iter().sum::<f64>(), 6.0, max_relative = 1e-14);
    }

    #[test]
    fn underflowed_probabilities_are_clamped_positive() {
        let asg = two_link_assignment(1.0);
        let p = asg.probabilities(&[0.0, 5000.0]);
        assert!(p[1] >= f64::MIN_POSITIVE);
        assert!(p[1] < 1e-300);
        assert_relative_eq!(p[0], 1.0, max_relative = 1e-12);
        let t = asg.target_flows(&p);
        assert!(t[1] > 0.0);
    }

    #[test]
    fn initial_flows_load_at_free_flow_costs() {
        let asg = braess_assignment(1.0);
        let h0 = asg.initial_flows();
        // Free-flow path costs (5, 5, 0): the crossing route dominates.
        let e5 = (-5.0f64).exp();
        let z = 1.0 + 2.0 * e5;
        assert_relative_eq!(h0[2], 6.0 / z, max_relative = 1e-13);
        assert_relative_eq!(h0.iter().sum::<f64>(), 6.0, max_relative = 1e-14);
    }

    #[test]
    fn theta_must_be_positive() {
        assert!(LogitParams::new(0.0).is_err());
        assert!(LogitParams::new(-1.0).is_err());
        assert!(LogitParams::new(f64::NAN).is_err());
        assert!(LogitParams::new(0.5).is_ok());
    }

    #[test]
    fn assignment_rejects_misaligned_path_set() {
        let net = parse_net_file(data("braess_net.tntp")).unwrap();
        let demand = parse_trips_file(data("braess_trips.tntp")).unwrap();
        // Single-link "path" that does not reach the destination.
        let ps = PathSet::from_paths(vec![vec![vec![0]]]).unwrap();
        assert!(Assignment::new(net, demand, ps, LogitParams::new(1.0).unwrap()).is_err());
    }
}
