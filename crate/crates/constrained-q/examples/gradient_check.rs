//! Central-difference validation of the hand-written backward passes, for
//! both network architectures on a few random parameter draws.

use constrained_q::deep::encode::NetInput;
use constrained_q::deep::gradcheck::gradient_check;
use constrained_q::deep::net::{LinearNet, SetNet, ValueNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    println!("{:<28} {:>8} {:>12}", "network", "checked", "max_rel_err");

    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = SetNet::new(3, 5);
        let params = net.init_params(&mut rng);
        let neighbors: Vec<f64> = (0..5 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ego = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let cq: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cj: Vec<f64> = (0..3 * 5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let report = gradient_check(
            &net,
            &params,
            NetInput::Set { neighbors: &neighbors, ego: &ego },
            &cq,
            &cj,
            23,
        );
        println!(
            "{:<28} {:>8} {:>12.3e}",
            format!("set-net (seed {seed})"),
            report.checked,
            report.max_rel_err
        );
    }

    for seed in 0..2u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let net = LinearNet::new(12, 2, 0);
        let params = net.init_params(&mut rng);
        let mut x = vec![0.0; 12];
        x[rng.gen_range(0..12)] = 1.0;
        let cq = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let report = gradient_check(&net, &params, NetInput::Flat(&x), &cq, &[], 1);
        println!(
            "{:<28} {:>8} {:>12.3e}",
            format!("linear-net (seed {})", 100 + seed),
            report.checked,
            report.max_rel_err
        );
    }
}
