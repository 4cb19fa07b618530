//! Per-step learning-rate schedule: linear warmup into a cosine decay.

use std::f64::consts::PI;

/// Learning rate at `step` (0-based) out of `total_steps`: a linear ramp from
/// 0 to `base_lr` over `warmup_steps`, then
/// `base_lr * 0.5 * (1 + cos(pi * progress))` over the remaining steps.
pub fn lr_at(step: usize, total_steps: usize, warmup_steps: usize, base_lr: f64) -> f64 {
    debug_assert!(step < total_steps, "lr_at: step {step} out of {total_steps}");
    if step < warmup_steps {
        return base_lr * step as f64 / warmup_steps as f64;
    }
    let decay_steps = total_steps - warmup_steps;
    if decay_steps <= 1 {
        return base_lr;
    }
    let progress = (step - warmup_steps) as f64 / decay_steps as f64;
    base_lr * 0.5 * (1.0 + (PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn warmup_end_hits_base_lr_exactly() {
        assert_eq!(lr_at(100, 1000, 100, 5e-4), 5e-4);
    }

    #[test]
    fn warmup_ramps_linearly_from_zero() {
        assert_eq!(lr_at(0, 1000, 100, 1.0), 0.0);
        assert_abs_diff_eq!(lr_at(50, 1000, 100, 1.0), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn decay_midpoint_is_half_base_lr() {
        // warmup 100, decay span 900, midpoint at step 550.
        assert_abs_diff_eq!(lr_at(550, 1000, 100, 4e-4), 2e-4, epsilon = 1e-9);
    }

    #[test]
    fn long_schedule_tail_is_negligible() {
        let base = 5e-4;
        let lr = lr_at(99_999, 100_000, 1_000, base);
        assert!(lr < base * 1e-4, "tail lr {lr}");
    }

    #[test]
    fn schedule_is_monotone_in_each_phase() {
        let total = 500;
        let warmup = 50;
        for step in 1..warmup {
            assert!(lr_at(step, total, warmup, 1.0) >= lr_at(step - 1, total, warmup, 1.0));
        }
        for step in warmup + 1..total {
            assert!(lr_at(step, total, warmup, 1.0) <= lr_at(step - 1, total, warmup, 1.0));
        }
    }
}
