use crate::error::{Error, Result};

/// Steps spent ramping up: `ceil(warmup_ratio * total_steps)`.
pub fn warmup_steps(total_steps: usize, warmup_ratio: f64) -> usize {
    let exact = warmup_ratio * total_steps as f64;
    let nearest = exact.round();
    if (exact - nearest).abs() < 1e-9 {
        nearest as usize
    } else {
        exact.ceil() as usize
    }
}

/// Linear warm-up from 0 to `peak` over the warm-up steps, then linear decay
/// to 0 at `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, peak: f64, warmup_ratio: f64) -> Result<f64> {
    if step > total_steps {
        return Err(Error::argument(format!(
            "step {step} beyond total {total_steps}"
        )));
    }
    let warmup = warmup_steps(total_steps, warmup_ratio);
    if step < warmup {
        return Ok(peak * step as f64 / warmup as f64);
    }
    if total_steps == warmup {
        return Ok(peak);
    }
    Ok(peak * (total_steps - step) as f64 / (total_steps - warmup) as f64)
}
