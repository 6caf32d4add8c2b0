//! Finite-difference validation of the analytic backward pass.

use super::encode::NetInput;
use super::net::ValueNet;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Compares the analytic gradient of a scalar probe loss against central
/// finite differences.
///
/// The probe loss is the linear combination `sum(coeff_q * q) +
/// sum(coeff_j * j)`, whose output gradient is exactly the coefficients. Each
/// parameter is perturbed by `1e-5 * max(1, |theta|)` in both directions;
/// the relative error of coordinate `k` is
/// `|g_k - fd_k| / max(1e-6, |g_k|, |fd_k|)`. `stride` checks every
/// `stride`-th coordinate (1 checks all of them).
pub fn gradient_check(
    net: &dyn ValueNet,
    params: &[f64],
    input: NetInput<'_>,
    coeff_q: &[f64],
    coeff_j: &[f64],
    stride: usize,
) -> GradCheckReport {
    assert!(stride >= 1);
    let loss = |p: &[f64]| -> f64 {
        let out = net.forward(p, input);
        let lq: f64 = out.q.iter().zip(coeff_q).map(|(a, b)| a * b).sum();
        let lj: f64 = out.j.iter().zip(coeff_j).map(|(a, b)| a * b).sum();
        lq + lj
    };
    let mut analytic = vec![0.0; net.n_params()];
    net.backward(params, input, coeff_q, coeff_j, &mut analytic);

    let mut probe = params.to_vec();
    let mut max_rel_err = 0.0f64;
    let mut checked = 0;
    for k in (0..params.len()).step_by(stride) {
        let eps = 1e-5 * params[k].abs().max(1.0);
        let saved = probe[k];
        probe[k] = saved + eps;
        let up = loss(&probe);
        probe[k] = saved - eps;
        let down = loss(&probe);
        probe[k] = saved;
        let fd = (up - down) / (2.0 * eps);
        let rel = (analytic[k] - fd).abs() / analytic[k].abs().max(fd.abs()).max(1e-6);
        max_rel_err = max_rel_err.max(rel);
        checked += 1;
    }
    GradCheckReport { max_rel_err, checked }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deep::net::{LinearNet, SetNet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_net_gradient_is_exact() {
        let net = LinearNet::new(5, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params: Vec<f64> = (0..net.n_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = vec![0.0, 1.0, 0.0, 0.0, 0.0];
        let cq = vec![0.3, -1.0, 0.5];
        let cj = vec![1.0, 0.0, -0.2, 0.7, 0.0, 0.1];
        let report =
            gradient_check(&net, &params, NetInput::Flat(&x), &cq, &cj, 1);
        assert!(report.max_rel_err < 1e-8, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn set_net_gradient_matches_finite_differences() {
        let net = SetNet::new(3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let params = net.init_params(&mut rng);
        let neighbors: Vec<f64> = (0..4 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ego = vec![0.2, -1.0];
        let cq: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cj: Vec<f64> = (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let report = gradient_check(
            &net,
            &params,
            NetInput::Set { neighbors: &neighbors, ego: &ego },
            &cq,
            &cj,
            17,
        );
        assert!(report.checked > 1000);
        assert!(report.max_rel_err < 1e-4, "rel err {}", report.max_rel_err);
    }
}
