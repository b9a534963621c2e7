use crate::error::{Error, Result};

/// Bias-corrected Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self::with_hyperparameters(len, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparameters(len: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::Input(format!(
            "adam length mismatch: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.len()
        )));
    }
    if !(lr >= 0.0) {
        return Err(Error::Input(format!("learning rate must be >= 0, got {lr}")));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::numeric(
            "gradient",
            format!("entry {i} is {}", grads[i]),
        ));
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        for g in [3.0, -0.02, 1e4] {
            let mut p = vec![1.0];
            let mut s = AdamState::new(1);
            adam_step(&mut p, &[g], &mut s, 0.1).unwrap();
            assert!((p[0] - (1.0 - 0.1 * f64::signum(g))).abs() < 1e-6, "g={g}: {}", p[0]);
            assert_eq!(s.step_count, 1);
        }
    }

    #[test]
    fn zero_lr_updates_moments_only() {
        let mut p = vec![0.5, -0.5];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[1.0, 2.0], &mut s, 0.0).unwrap();
        assert_eq!(p, vec![0.5, -0.5]);
        assert!((s.first_moment[1] - 0.2).abs() < 1e-15);
        assert!((s.second_moment[1] - 0.004).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_from_zero_state_is_noop() {
        let mut p = vec![0.25, 7.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 1.0).unwrap();
        assert_eq!(p, vec![0.25, 7.0]);
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let run = || {
            let mut p = vec![0.1, 0.2, 0.3];
            let mut s = AdamState::new(3);
            for k in 0..50 {
                let g: Vec<f64> = p.iter().map(|x| (x * 3.1 + k as f64).sin()).collect();
                adam_step(&mut p, &g, &mut s, 0.01).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut s = AdamState::new(1);
        assert!(adam_step(&mut [0.0], &[f64::NAN], &mut s, 0.1).is_err());
        assert!(adam_step(&mut [0.0], &[1.0, 2.0], &mut s, 0.1).is_err());
        assert!(adam_step(&mut [0.0], &[1.0], &mut s, -1.0).is_err());
        assert_eq!(s.step_count, 0);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut p = vec![5.0, -3.0];
        let mut s = AdamState::new(2);
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            adam_step(&mut p, &g, &mut s, 0.05).unwrap();
        }
        assert!(p.iter().all(|x| x.abs() < 1e-2), "{p:?}");
    }
}
