// Scratch diagnostic; not part of the deliverable.
use aces::gp::{optimize_hyperparameters, HyperBounds, PosteriorGP};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn main() {
    let path = std::env::args().nth(1).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[0] != "0" {
            continue;
        }
        xs.push(DVector::from_vec(vec![
            f[2].parse::<f64>().unwrap(),
            f[3].parse::<f64>().unwrap(),
            f[4].parse::<f64>().unwrap(),
            f[5].parse::<f64>().unwrap(),
        ]));
        ys.push(f[6].parse::<f64>().unwrap());
    }
    let y = DVector::from_vec(ys);
    let m = y.mean();
    let var = y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / y.len() as f64;
    println!("n={} var(y)={:.3}", xs.len(), var);
    let ranges = [1.5, 2.0, 1.6, std::f64::consts::PI];

    for (label, cap) in [("cap 1e4 (current)", 1e4), ("cap 2*var", 2.0 * var), ("cap 1*var", var)] {
        let bounds = HyperBounds {
            signal_variance: (1e-6, cap),
            ..HyperBounds::default()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let (spec, _) = optimize_hyperparameters(&xs, &y, &ranges, &bounds, None, &mut rng);
        let gp = PosteriorGP::fit(xs.clone(), y.clone(), spec.clone()).unwrap();
        // Predictive std at unexplored spots: a far corner and a mid-box hole.
        let probes = [
            [2.45, 0.95, 0.45, -1.4],
            [1.1, -0.9, 1.9, 1.2],
            [1.75, 0.0, 1.2, 0.0],
        ];
        let stds: Vec<String> = probes
            .iter()
            .map(|p| format!("{:.3}", gp.predict(p).1))
            .collect();
        println!(
            "  {label}: ls={:?} sv={:.2} noise={:.1e} lml={:.1} stds={:?}",
            spec.length_scales.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>(),
            spec.signal_variance,
            spec.noise_variance,
            gp.log_marginal_likelihood(),
            stds
        );
    }
}
