use serde::{Deserialize, Serialize};

use super::{NnError, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// ADAM moments for a list of parameter groups.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f32> {
    pub step_count: u64,
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    /// Zero moments shaped like `params`.
    pub fn new(params: &[&[T]], config: AdamConfig) -> Self {
        Self {
            step_count: 0,
            first_moment: params.iter().map(|p| vec![T::ZERO; p.len()]).collect(),
            second_moment: params.iter().map(|p| vec![T::ZERO; p.len()]).collect(),
            config,
        }
    }

    /// One bias-corrected ADAM update in place.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(NnError::Shape(format!(
                "{} parameter groups, {} gradient groups, {} moment groups",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(NnError::Shape(format!("group of {} params, {} grads, {} moments", p.len(), g.len(), m.len())));
            }
        }
        self.step_count += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (gi, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[gi];
            let v = &mut self.second_moment[gi];
            for j in 0..p.len() {
                let gj = g[j].to_f64();
                let mj = beta1 * m[j].to_f64() + (1.0 - beta1) * gj;
                let vj = beta2 * v[j].to_f64() + (1.0 - beta2) * gj * gj;
                m[j] = T::from_f64(mj);
                v[j] = T::from_f64(vj);
                let update = lr * (mj / bc1) / ((vj / bc2).sqrt() + eps);
                p[j] = T::from_f64(p[j].to_f64() - update);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![1.0f64, -2.0, 0.5];
        let g = vec![3.0f64, -0.01, 100.0];
        let cfg = AdamConfig { eps: 1e-12, ..Default::default() };
        let mut st = AdamState::new(&[&p], cfg);
        st.step(&mut [&mut p], &[&g]).unwrap();
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p[1] - (-2.0 + 1e-3)).abs() < 1e-9);
        assert!((p[2] - (0.5 - 1e-3)).abs() < 1e-9);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn minimizes_shifted_quadratic() {
        let mut w = vec![0.0f64];
        let mut st = AdamState::new(&[&w], AdamConfig { lr: 0.1, ..Default::default() });
        let mut converged_at = None;
        for step in 1..=500 {
            let g = vec![2.0 * (w[0] - 3.0)];
            st.step(&mut [&mut w], &[&g]).unwrap();
            if converged_at.is_none() && (w[0] - 3.0).abs() < 0.01 {
                converged_at = Some(step);
            }
        }
        assert!(converged_at.is_some());
        assert!((w[0] - 3.0).abs() < 0.01, "w = {}", w[0]);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = vec![0.3f32, 0.7];
        let mut st = AdamState::new(&[&p], AdamConfig::default());
        st.first_moment[0] = vec![0.0, 0.0];
        st.step(&mut [&mut p], &[&[0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![0.3, 0.7]);
        assert!(st.second_moment[0].iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![0.0f32; 3];
        let mut st = AdamState::new(&[&p], AdamConfig::default());
        assert!(st.step(&mut [&mut p], &[&[0.0, 0.0]]).is_err());
    }
}
