//! First-order optimizers on flat parameter vectors.

/// Gradient-descent rule. Adam keeps per-parameter moment estimates sized to
/// the network it was created for.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: u64,
        m: Vec<f64>,
        v: Vec<f64>,
    },
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Self {
        Optimizer::Sgd { lr }
    }

    pub fn adam(lr: f64, n_params: usize) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// One descent step: `params -= direction(grad)`.
    pub fn apply(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), grad.len());
        match self {
            Optimizer::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= *lr * g;
                }
            }
            Optimizer::Adam { lr, beta1, beta2, eps, t, m, v } => {
                *t += 1;
                let bc1 = 1.0 - beta1.powi(*t as i32);
                let bc2 = 1.0 - beta2.powi(*t as i32);
                for i in 0..params.len() {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * grad[i];
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * grad[i] * grad[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    params[i] -= *lr * m_hat / (v_hat.sqrt() + *eps);
                }
            }
        }
    }
}

/// Soft target-network update: `target = (1 - tau) * target + tau * online`.
/// `tau = 1` copies the online parameters outright.
pub fn polyak(target: &mut [f64], online: &[f64], tau: f64) {
    assert_eq!(target.len(), online.len());
    for (t, o) in target.iter_mut().zip(online) {
        *t = (1.0 - tau) * *t + tau * *o;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_moves_against_the_gradient() {
        let mut p = vec![1.0, -2.0];
        Optimizer::sgd(0.5).apply(&mut p, &[2.0, -4.0]);
        assert_eq!(p, vec![0.0, 0.0]);
    }

    #[test]
    fn adam_converges_on_a_quadratic() {
        // Minimize (x - 3)^2 + (y + 1)^2.
        let mut p = vec![0.0, 0.0];
        let mut opt = Optimizer::adam(0.05, 2);
        for _ in 0..2000 {
            let g = vec![2.0 * (p[0] - 3.0), 2.0 * (p[1] + 1.0)];
            opt.apply(&mut p, &g);
        }
        assert!((p[0] - 3.0).abs() < 1e-3);
        assert!((p[1] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn polyak_with_full_tau_copies() {
        let mut t = vec![0.0, 0.0];
        polyak(&mut t, &[1.0, 2.0], 1.0);
        assert_eq!(t, vec![1.0, 2.0]);
        polyak(&mut t, &[3.0, 4.0], 0.5);
        assert_eq!(t, vec![2.0, 3.0]);
    }
}
