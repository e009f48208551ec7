use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    Cosine,
}

/// Learning-rate schedule with linear warmup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LRSchedule {
    pub kind: ScheduleKind,
    pub peak_lr: f64,
    pub warmup_steps: u64,
    /// Step at which the cosine reaches its floor.
    pub total_decay_steps: u64,
    #[serde(default = "default_final_fraction")]
    pub final_lr_fraction: f64,
}

fn default_final_fraction() -> f64 {
    0.10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulePoint {
    pub step: u64,
    pub lr: f64,
    pub decayed_fraction: f64,
}

impl LRSchedule {
    pub fn constant(peak_lr: f64, warmup_steps: u64) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            peak_lr,
            warmup_steps,
            total_decay_steps: warmup_steps + 1,
            final_lr_fraction: 1.0,
        }
    }

    pub fn cosine(peak_lr: f64, warmup_steps: u64, total_decay_steps: u64) -> Self {
        Self {
            kind: ScheduleKind::Cosine,
            peak_lr,
            warmup_steps,
            total_decay_steps,
            final_lr_fraction: default_final_fraction(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr > 0.0) || !self.peak_lr.is_finite() {
            return Err(Error::invalid("schedule peak_lr must be > 0"));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(Error::invalid("final_lr_fraction must be in (0, 1]"));
        }
        if self.kind == ScheduleKind::Cosine && self.warmup_steps >= self.total_decay_steps {
            return Err(Error::invalid("cosine schedule needs warmup_steps < total_decay_steps"));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        let peak = self.peak_lr;
        if step < self.warmup_steps {
            return peak * step as f64 / self.warmup_steps as f64;
        }
        match self.kind {
            ScheduleKind::Constant => peak,
            ScheduleKind::Cosine => {
                let floor = self.final_lr_fraction * peak;
                if step >= self.total_decay_steps {
                    return floor;
                }
                let span = (self.total_decay_steps - self.warmup_steps) as f64;
                let progress = (step - self.warmup_steps) as f64 / span;
                floor + (peak - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }

    /// `H = (peak − lr) / peak` after warmup, zero during it.
    pub fn decayed_fraction(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return 0.0;
        }
        (self.peak_lr - self.lr_at(step)) / self.peak_lr
    }

    pub fn point(&self, step: u64) -> SchedulePoint {
        SchedulePoint {
            step,
            lr: self.lr_at(step),
            decayed_fraction: self.decayed_fraction(step),
        }
    }
}
