//! Linear warmup into cosine decay, with layer-wise multipliers.

use super::OptimizerConfig;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Schedule {
    pub total_steps: usize,
    pub warmup_steps: usize,
    /// Floor of the cosine tail as a fraction of the peak rate.
    pub min_lr_fraction: f64,
}

impl Schedule {
    pub fn from_epochs(
        epochs: usize,
        warmup_epochs: usize,
        steps_per_epoch: usize,
        min_lr_fraction: f64,
    ) -> Self {
        Schedule {
            total_steps: epochs * steps_per_epoch,
            warmup_steps: warmup_epochs * steps_per_epoch,
            min_lr_fraction,
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.warmup_steps >= self.total_steps.max(1) {
            out.push(format!(
                "schedule warmup ({}) must be smaller than total steps ({})",
                self.warmup_steps, self.total_steps
            ));
        }
        if !(0.0..=1.0).contains(&self.min_lr_fraction) {
            out.push(format!(
                "schedule min_lr_fraction must lie in [0, 1], got {}",
                self.min_lr_fraction
            ));
        }
        out
    }
}

/// Learning rate at a global step for a parameter at `layer_index` in a
/// model with layers 0..=num_layers: linear warmup from 0 to the peak rate,
/// cosine decay to `min_lr_fraction`·peak, multiplied by
/// layer_decay^(num_layers − layer_index).
pub fn lr_at_step(
    step: usize,
    optimizer: &OptimizerConfig,
    schedule: &Schedule,
    layer_index: usize,
    num_layers: usize,
) -> f64 {
    let peak = optimizer.lr;
    let floor = schedule.min_lr_fraction * peak;
    let base = if step < schedule.warmup_steps {
        peak * step as f64 / schedule.warmup_steps as f64
    } else if step >= schedule.total_steps {
        floor
    } else {
        let t = (step - schedule.warmup_steps) as f64
            / (schedule.total_steps - schedule.warmup_steps) as f64;
        floor + (peak - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
    };
    let depth = num_layers.saturating_sub(layer_index) as u32;
    base * optimizer.layer_decay.powi(depth as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opt() -> OptimizerConfig {
        OptimizerConfig::default()
    }

    fn sched() -> Schedule {
        Schedule {
            total_steps: 100,
            warmup_steps: 10,
            min_lr_fraction: 0.1,
        }
    }

    #[test]
    fn warmup_boundary_hits_peak_exactly() {
        let lr = lr_at_step(10, &opt(), &sched(), 4, 4);
        assert_eq!(lr, opt().lr);
    }

    #[test]
    fn layer_multipliers() {
        let top = lr_at_step(10, &opt(), &sched(), 4, 4);
        let below = lr_at_step(10, &opt(), &sched(), 3, 4);
        assert!((below / top - 0.65).abs() < 1e-12);
        let bottom = lr_at_step(10, &opt(), &sched(), 0, 4);
        assert!((bottom / top - 0.65f64.powi(4)).abs() < 1e-12);
    }

    #[test]
    fn cosine_endpoint_is_floor() {
        let lr = lr_at_step(100, &opt(), &sched(), 4, 4);
        assert!((lr - 0.1 * opt().lr).abs() < 1e-15);
        // Beyond the end the rate stays at the floor.
        assert_eq!(lr_at_step(1000, &opt(), &sched(), 4, 4), lr);
    }

    #[test]
    fn continuous_at_warmup_and_nonnegative() {
        let before = lr_at_step(9, &opt(), &sched(), 4, 4);
        let at = lr_at_step(10, &opt(), &sched(), 4, 4);
        let after = lr_at_step(11, &opt(), &sched(), 4, 4);
        assert!(before < at && after < at);
        assert!((at - before) < 0.11 * opt().lr);
        for step in 0..=120 {
            assert!(lr_at_step(step, &opt(), &sched(), 2, 4) >= 0.0);
        }
    }

    #[test]
    fn zero_warmup_starts_at_peak() {
        let s = Schedule {
            total_steps: 50,
            warmup_steps: 0,
            min_lr_fraction: 0.0,
        };
        assert_eq!(lr_at_step(0, &opt(), &s, 4, 4), opt().lr);
    }
}
