//! The neural-network toolkit on its own: gradient check, a few hundred Adam
//! steps on a toy problem, and a bit-exact save and reload.

use deepofdm::neuralnet::{
    adam_step, batch_loss, cast_mlp, gradient_check, init_params, layer_specs, load_weights, save_weights, AdamState,
    Mlp, TrainConfig, WeightFile,
};
use deepofdm::rng::rng_from_seed;
use ndarray::Array2;
use rand::Rng;

fn main() -> deepofdm::Result<()> {
    let mut rng = rng_from_seed(11);
    let dims = [8, 32, 16, 4];
    let mlp64: Mlp<f64> = init_params(&layer_specs(&dims), &mut rng)?;

    // target: the sign pattern of the first four inputs
    let batch = |rng: &mut deepofdm::rng::SimRng| {
        let x = Array2::from_shape_simple_fn((128, 8), || rng.random_range(-1.0..1.0));
        let t = x.slice(ndarray::s![.., ..4]).mapv(|v: f64| (v > 0.0) as u8 as f64);
        (x, t)
    };
    let (x, t) = batch(&mut rng);
    let report = gradient_check(&mlp64, x.view(), t.view(), 50, &mut rng)?;
    println!("gradient check: max relative error {:.2e}", report.max_rel_error);

    let mut mlp = mlp64;
    let cfg = TrainConfig { learning_rate: 3e-3, n_steps: 600, ..TrainConfig::default() };
    let mut adam = AdamState::new(&mlp);
    for step in 0..cfg.n_steps {
        let (x, t) = batch(&mut rng);
        let cache = mlp.forward_batch(x.view())?;
        if step % 100 == 0 {
            println!("step {step:>4} loss {:.4}", batch_loss(cache.output(), t.view()));
        }
        let grads = mlp.backward(&cache, t.view())?;
        adam_step(&mut mlp, &grads, &mut adam, &cfg);
    }

    let dir = std::env::temp_dir().join("deepofdm-train-mlp");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("toy.json");
    let small: Mlp<f32> = cast_mlp(&mlp);
    save_weights(&path, &WeightFile::from_mlp(&small, Some(cfg), Some(11)))?;
    let back = load_weights::<f32>(&path)?.to_mlp().map_err(deepofdm::Error::InvalidInput)?;
    println!("reloaded {} parameters, identical: {}", back.n_params(), back == small);
    Ok(())
}
