//! Backpropagation against central differences on a few random networks.

use ndarray::Array2;
use omrl::nn::Mlp;
use omrl::rng::seeded_rng;
use rand::Rng;

fn main() -> omrl::Result<()> {
    let mut rng = seeded_rng(1, "example-gradcheck");
    for (i, o) in [(6, 3), (17, 75), (11, 40)] {
        let net = Mlp::new(i, &[12, 12], o, &mut rng)?;
        let obs = Array2::from_shape_fn((3, i), |_| rng.random_range(-1.0..1.0));
        let up = Array2::from_shape_fn((3, o), |_| rng.random_range(-1.0..1.0));
        let exact = net.backprop(obs.view(), up.view())?.flatten();

        let f = |n: &Mlp| -> omrl::Result<f64> { Ok((&n.forward(obs.view())? * &up).sum()) };
        let base = net.flat_params();
        let mut probe = net.clone();
        let mut worst = 0.0f64;
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] += 1e-6;
            probe.set_flat_params(&p)?;
            let plus = f(&probe)?;
            p[k] -= 2e-6;
            probe.set_flat_params(&p)?;
            let numeric = (plus - f(&probe)?) / 2e-6;
            let rel = (exact[k] - numeric).abs() / (exact[k].abs() + numeric.abs()).max(1e-7);
            worst = worst.max(rel);
        }
        println!("in {i:>2} out {o:>2}: {} params, worst relative error {worst:.2e}", base.len());
    }
    Ok(())
}
