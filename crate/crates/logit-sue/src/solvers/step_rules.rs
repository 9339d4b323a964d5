//! Step-size rules for the averaged fixed-point iteration.
//!
//! The adaptive rule keeps the harmonic sequence until a warmup iteration,
//! then holds the step constant and only shrinks it (back onto the harmonic
//! envelope) when a short window of residual norms stops improving. The
//! two-point rules estimate a quasi-Newton scalar step from consecutive
//! iterate and map differences.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::krylov::dot;

#[derive(Debug, Clone, Copy)]
pub struct AcsConfig {
    /// Harmonic warmup length; the constant phase starts after this many
    /// iterations.
    pub i_s: usize,
    /// Minimum relative residual improvement across the window.
    pub epsilon: f64,
    /// Window length in iterations.
    pub q: usize,
}

impl Default for AcsConfig {
    fn default() -> Self {
        AcsConfig {
            i_s: 10,
            epsilon: 0.01,
            q: 3,
        }
    }
}

impl AcsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.i_s == 0 {
            return Err(Error::Invalid("warmup length must be at least 1".into()));
        }
        if self.q < 2 {
            return Err(Error::Invalid("window length must be at least 2".into()));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Invalid(format!(
                "improvement threshold must be positive and finite, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Outcome of one adaptive-step decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcsStep {
    pub step: f64,
    /// The window stalled and the step was pulled back onto the harmonic
    /// envelope this iteration.
    pub reset: bool,
    /// The oldest windowed residual is exactly zero; the iteration is at a
    /// fixed point and the caller should stop.
    pub zero_gap: bool,
}

#[derive(Debug, Clone)]
pub struct AcsState {
    cfg: AcsConfig,
    window: VecDeque<f64>,
    current: f64,
}

impl AcsState {
    pub fn new(cfg: AcsConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(AcsState {
            cfg,
            window: VecDeque::with_capacity(cfg.q + 1),
            current: 1.0,
        })
    }

    /// Record the residual norm of iteration `k` (1-based) and return the
    /// step to use for it. The window is fed before the decision, and a
    /// reset clears it so the next check sees only fresh residuals.
    pub fn advance(&mut self, k: usize, gap: f64) -> AcsStep {
        debug_assert!(k >= 1);
        self.window.push_back(gap);
        if self.window.len() > self.cfg.q {
            self.window.pop_front();
        }
        if k <= self.cfg.i_s {
            self.current = 1.0 / k as f64;
            return AcsStep {
                step: self.current,
                reset: false,
                zero_gap: false,
            };
        }
        let mut reset = false;
        let mut zero_gap = false;
        if self.window.len() == self.cfg.q {
            let oldest = *self.window.front().unwrap();
            let newest = *self.window.back().unwrap();
            if oldest == 0.0 {
                zero_gap = true;
            } else if (oldest - newest) / oldest < self.cfg.epsilon {
                self.current = 1.0 / k as f64;
                self.window.clear();
                reset = true;
            }
        }
        AcsStep {
            step: self.current,
            reset,
            zero_gap,
        }
    }

    pub fn current(&self) -> f64 {
        self.current
    }
}

/// First two-point step: projection of the iterate difference onto the
/// residual-map difference. `None` when the quotient is not finite;
/// otherwise clipped into `[0, 1]` so relaxed iterates stay feasible.
pub fn bb1_step(dh: &[f64], dl: &[f64]) -> Option<f64> {
    let mut denom = 0.0;
    let mut num = 0.0;
    for (a, b) in dh.iter().zip(dl) {
        let y = a - b;
        denom += y * y;
        num += a * y;
    }
    clip_step(num / denom)
}

/// Second two-point step, the dual quotient of the first.
pub fn bb2_step(dh: &[f64], dl: &[f64]) -> Option<f64> {
    let num = dot(dh, dh);
    let mut denom = 0.0;
    for (a, b) in dh.iter().zip(dl) {
        denom += a * (a - b);
    }
    clip_step(num / denom)
}

fn clip_step(raw: f64) -> Option<f64> {
    if raw.is_finite() {
        Some(raw.clamp(0.0, 1.0))
    } else {
        None
    }
}
